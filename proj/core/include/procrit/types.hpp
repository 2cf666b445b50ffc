#pragma once

// Domain types shared by every stage of the proposal-critic engine.
// All of them are immutable after construction and safe to share
// between concurrent workers.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "procrit/errors.hpp"

namespace procrit {

// ============================================================================
// Label - the binary sarcasm label, canonical text forms "yes"/"no"
// ============================================================================

enum class Label : std::uint8_t {
    Sarcastic,
    NotSarcastic,
};

std::string render_label(Label label);

// Strict parse of the canonical forms; anything else is nullopt.
std::optional<Label> parse_label(std::string_view text);

// ============================================================================
// Prediction - three-valued: yes, no, or Invalid
// ============================================================================

// Invalid compares unequal to everything, including another Invalid,
// so a malformed revision can never be credited as a fix.
struct Prediction {
    std::optional<Label> label;  // nullopt = Invalid
    std::string raw;             // the text the answer was parsed from

    bool valid() const { return label.has_value(); }

    static Prediction make_valid(Label l, std::string raw = {}) {
        return Prediction{l, std::move(raw)};
    }
    static Prediction invalid(std::string raw = {}) {
        return Prediction{std::nullopt, std::move(raw)};
    }
};

// True iff pred is Valid and equals gold.
inline bool matches(const Prediction& pred, Label gold) {
    return pred.label.has_value() && *pred.label == gold;
}

// Three-valued equality: true only when both are Valid with the same label.
inline bool same_prediction(const Prediction& a, const Prediction& b) {
    return a.label.has_value() && b.label.has_value() && *a.label == *b.label;
}

// Wire form: "yes" / "no" / "invalid".
std::string render_prediction(const Prediction& pred);

// Inverse of render_prediction for reading result files: "yes" and "no"
// parse Valid, anything else is Invalid.
Prediction parse_prediction_token(std::string_view text);

// ============================================================================
// Sample - one image-text pair, the unit flowing through every stage
// ============================================================================

struct Sample {
    std::string id;
    std::optional<std::string> image_ref;  // opaque path or URI, never decoded
    std::string text;
    std::optional<Label> gold;
};

// ============================================================================
// RoleStep / Trajectory - the dynamic-role rollout record
// ============================================================================

enum class NextAction : std::uint8_t {
    Continue,
    FinalAnswer,
};

struct RoleStep {
    std::string title;
    std::string content;
    NextAction next_action = NextAction::Continue;
};

// A rollout trajectory. Construction enforces the step pattern: at least
// two steps, every step but the last Continue, the last FinalAnswer, and
// length within the limit the rollout engine passes in.
class Trajectory {
  public:
    static Trajectory create(std::string sample_id, std::vector<RoleStep> steps,
                             Prediction final_answer, std::size_t max_len);

    const std::string& sample_id() const { return sample_id_; }
    const std::vector<RoleStep>& steps() const { return steps_; }
    const Prediction& final_answer() const { return final_answer_; }
    std::size_t length() const { return steps_.size(); }

  private:
    Trajectory(std::string sample_id, std::vector<RoleStep> steps, Prediction final_answer)
        : sample_id_(std::move(sample_id)),
          steps_(std::move(steps)),
          final_answer_(std::move(final_answer)) {}

    std::string sample_id_;
    std::vector<RoleStep> steps_;
    Prediction final_answer_;
};

// ============================================================================
// ReasoningOutput / Critique - parsed agent completions
// ============================================================================

struct ReasoningOutput {
    std::string think_text;
    Prediction prediction;
    bool format_ok = false;
    std::string raw;
};

// Critic quality score: integer in {0,1,2} or Invalid.
struct CriticScore {
    std::optional<int> value;  // nullopt = Invalid

    bool valid() const { return value.has_value(); }

    static CriticScore make_valid(int v) { return CriticScore{v}; }
    static CriticScore invalid() { return CriticScore{std::nullopt}; }
};

struct Critique {
    std::string feedback;
    CriticScore score;
    bool format_ok = false;
    std::string raw;
};

// ============================================================================
// RewardBreakdown - named components plus their exact sum
// ============================================================================

// Every component is a multiple of 0.5 in a small range, so the sum is an
// exact double and equality checks on totals do not need a tolerance.
class RewardBreakdown {
  public:
    using Component = std::pair<std::string, double>;

    RewardBreakdown() = default;
    explicit RewardBreakdown(std::vector<Component> components);

    double total() const { return total_; }
    const std::vector<Component>& components() const { return components_; }

    // Throws ValidationError if the component is absent.
    double component(std::string_view name) const;
    bool has(std::string_view name) const;

  private:
    std::vector<Component> components_;
    double total_ = 0.0;
};

// ============================================================================
// RolloutGroup - G drafts, K parents, M revisions per parent
// ============================================================================

struct DraftRecord {
    ReasoningOutput output;
    Critique critique;
    RewardBreakdown reward;
};

struct RevisionRecord {
    ReasoningOutput output;
    RewardBreakdown reward;
};

struct ParentRecord {
    std::size_t draft_index = 0;  // index into RolloutGroup::drafts
    std::string feedback;         // exactly the referenced draft's critique feedback
    std::vector<RevisionRecord> revisions;
};

struct RolloutGroup {
    std::string sample_id;
    std::vector<DraftRecord> drafts;
    std::vector<ParentRecord> parents;
};

// Checks K in [1, G], distinct in-range parent indices, and feedback
// identity against the referenced drafts. Throws ValidationError.
void validate_rollout_group(const RolloutGroup& group);

// ============================================================================
// AdvantageSet - group-relative advantages plus the group stats behind them
// ============================================================================

class AdvantageSet {
  public:
    // mean/std are the reward-group statistics the advantages were
    // normalized with. Throws ValidationError when the set is smaller than
    // two or the zero-mean property fails.
    AdvantageSet(std::vector<double> values, double mean, double std_dev, double epsilon);

    const std::vector<double>& values() const { return values_; }
    double mean() const { return mean_; }
    double std_dev() const { return std_; }
    double epsilon() const { return epsilon_; }

  private:
    std::vector<double> values_;
    double mean_ = 0.0;
    double std_ = 0.0;
    double epsilon_ = 0.0;
};

// ============================================================================
// helpers
// ============================================================================

std::string trim_copy(std::string_view text);

}  // namespace procrit
