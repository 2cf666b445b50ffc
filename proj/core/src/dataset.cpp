#include "procrit/dataset.hpp"

#include <fstream>

#include "procrit/errors.hpp"

namespace procrit {

Sample validate_sample(const nlohmann::json& record) {
    if (!record.is_object()) throw MissingField("id");
    if (!record.contains("id") || !record["id"].is_string()) throw MissingField("id");
    if (!record.contains("text") || !record["text"].is_string()) throw MissingField("text");

    Sample sample;
    sample.id = record["id"].get<std::string>();
    sample.text = record["text"].get<std::string>();
    if (trim_copy(sample.text).empty()) throw EmptyText();

    if (record.contains("image")) {
        if (!record["image"].is_string()) throw MissingField("image");
        sample.image_ref = record["image"].get<std::string>();
    }
    if (record.contains("label")) {
        if (!record["label"].is_string()) throw BadLabel(record["label"].dump());
        const std::string raw = record["label"].get<std::string>();
        const auto label = parse_label(raw);
        if (!label) throw BadLabel(raw);
        sample.gold = *label;
    }
    return sample;
}

std::vector<Sample> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FileParseError(0, "cannot open " + path);

    std::vector<Sample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_copy(line).empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FileParseError(line_no, e.what());
        }
        try {
            samples.push_back(validate_sample(record));
        } catch (const Error& e) {
            throw FileParseError(line_no, e.what());
        }
    }
    if (samples.empty()) throw EmptyInput();
    return samples;
}

std::vector<Sample> load_labeled_dataset(const std::string& path) {
    std::vector<Sample> samples = load_dataset(path);
    for (const Sample& sample : samples) {
        if (!sample.gold.has_value()) {
            throw ValidationError("sample '" + sample.id + "' in " + path + " has no label");
        }
    }
    return samples;
}

}  // namespace procrit
