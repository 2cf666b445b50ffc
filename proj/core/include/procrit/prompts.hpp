#pragma once

// Prompt templates for every agent role. Default bodies are compiled in;
// a config-specified directory can override any of them without a rebuild
// (one file per template, named by template_file_name).
//
// Placeholder syntax: {text}, {reasoning}, {feedback}. Only these three
// names are placeholders; any other braces in a body are literal text, so
// JSON examples inside prompts survive rendering untouched.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "procrit/backend.hpp"
#include "procrit/config.hpp"
#include "procrit/types.hpp"

namespace procrit {

enum class TemplateId : std::uint8_t {
    RolloutSystem,    // multi-step synthesis system prompt
    RolloutFollowup,  // one-more-step prompt between rollout turns
    Draft,            // dynamic-perspective drafting (default)
    FixedDraft,       // three fixed perspectives baseline
    GenericDraft,     // plain chain-of-thought baseline
    Critic,           // feedback + score rubric
    Revise,           // from-scratch revision under feedback
};

struct PromptTemplate {
    TemplateId id;
    std::string body;
};

// "rollout_system.txt", "draft_dynamic.txt", ... (the override file names).
std::string template_file_name(TemplateId id);

const std::string& default_template_body(TemplateId id);

// Substitutes placeholders: {text} from the sample, {reasoning} and
// {feedback} from the context map. A placeholder present in the body but
// absent from those sources raises MissingPlaceholder.
std::string render_prompt(const PromptTemplate& tmpl, const Sample& sample,
                          const std::map<std::string, std::string>& context = {});

// Splits a rendered prompt at the literal "<image>" marker and interleaves
// the sample's image reference as an image part. Without a marker the image
// part (when present) is placed first; without an image the marker line is
// dropped.
std::vector<ContentPart> build_user_parts(const std::string& rendered,
                                          const std::optional<std::string>& image_ref);

// Resolves template bodies, preferring files in override_dir when set.
class PromptLibrary {
  public:
    PromptLibrary() = default;
    explicit PromptLibrary(std::string override_dir);

    PromptTemplate get(TemplateId id) const;

    // The draft template for a CLI-selected mode.
    static TemplateId draft_template_for(TemplateMode mode);

  private:
    std::string override_dir_;
};

}  // namespace procrit
