#pragma once

// Dataset loading. Input files are JSON Lines, one object per line:
//   {"id": "...", "text": "...", "image": "path-or-uri", "label": "yes"|"no"}
// with image and label optional.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "procrit/types.hpp"

namespace procrit {

// Checks one parsed record. Throws MissingField for absent/mistyped id or
// text, EmptyText for whitespace-only text, BadLabel for a label outside
// "yes"/"no".
Sample validate_sample(const nlohmann::json& record);

// Loads every line of a JSONL file. Throws FileParseError with the
// offending 1-based line number, EmptyInput when no records remain.
std::vector<Sample> load_dataset(const std::string& path);

// Loads and additionally requires a gold label on every sample (training
// and evaluation flows need one).
std::vector<Sample> load_labeled_dataset(const std::string& path);

}  // namespace procrit
