#include "procrit/types.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

namespace procrit {

std::string render_label(Label label) {
    return label == Label::Sarcastic ? "yes" : "no";
}

std::optional<Label> parse_label(std::string_view text) {
    if (text == "yes") return Label::Sarcastic;
    if (text == "no") return Label::NotSarcastic;
    return std::nullopt;
}

std::string render_prediction(const Prediction& pred) {
    if (!pred.label.has_value()) return "invalid";
    return render_label(*pred.label);
}

Prediction parse_prediction_token(std::string_view text) {
    const auto label = parse_label(text);
    if (label) return Prediction::make_valid(*label, std::string(text));
    return Prediction::invalid(std::string(text));
}

std::string trim_copy(std::string_view text) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && is_space(static_cast<unsigned char>(text[begin]))) ++begin;
    while (end > begin && is_space(static_cast<unsigned char>(text[end - 1]))) --end;
    return std::string(text.substr(begin, end - begin));
}

Trajectory Trajectory::create(std::string sample_id, std::vector<RoleStep> steps,
                              Prediction final_answer, std::size_t max_len) {
    if (steps.size() < 2) {
        throw ValidationError("trajectory needs at least 2 steps, got " +
                              std::to_string(steps.size()));
    }
    if (steps.size() > max_len) {
        throw ValidationError("trajectory has " + std::to_string(steps.size()) +
                              " steps, limit is " + std::to_string(max_len));
    }
    for (std::size_t i = 0; i + 1 < steps.size(); ++i) {
        if (steps[i].next_action != NextAction::Continue) {
            throw ValidationError("step " + std::to_string(i + 1) +
                                  " must continue, only the last step answers");
        }
    }
    if (steps.back().next_action != NextAction::FinalAnswer) {
        throw ValidationError("last step must carry the final answer");
    }
    return Trajectory(std::move(sample_id), std::move(steps), std::move(final_answer));
}

RewardBreakdown::RewardBreakdown(std::vector<Component> components)
    : components_(std::move(components)) {
    for (const auto& [name, value] : components_) total_ += value;
}

double RewardBreakdown::component(std::string_view name) const {
    for (const auto& [key, value] : components_) {
        if (key == name) return value;
    }
    throw ValidationError("no reward component named '" + std::string(name) + "'");
}

bool RewardBreakdown::has(std::string_view name) const {
    return std::any_of(components_.begin(), components_.end(),
                       [&](const Component& c) { return c.first == name; });
}

void validate_rollout_group(const RolloutGroup& group) {
    const std::size_t g = group.drafts.size();
    const std::size_t k = group.parents.size();
    if (k < 1 || k > g) {
        throw ValidationError("group has " + std::to_string(k) + " parents for " +
                              std::to_string(g) + " drafts");
    }
    std::unordered_set<std::size_t> seen;
    for (const ParentRecord& parent : group.parents) {
        if (parent.draft_index >= g) {
            throw ValidationError("parent references draft " +
                                  std::to_string(parent.draft_index) + " of " +
                                  std::to_string(g));
        }
        if (!seen.insert(parent.draft_index).second) {
            throw ValidationError("draft " + std::to_string(parent.draft_index) +
                                  " selected as parent twice");
        }
        if (parent.feedback != group.drafts[parent.draft_index].critique.feedback) {
            throw ValidationError("parent feedback diverges from the critique of draft " +
                                  std::to_string(parent.draft_index));
        }
    }
}

AdvantageSet::AdvantageSet(std::vector<double> values, double mean, double std_dev,
                           double epsilon)
    : values_(std::move(values)), mean_(mean), std_(std_dev), epsilon_(epsilon) {
    if (values_.size() < 2) {
        throw ValidationError("advantage set needs at least 2 members, got " +
                              std::to_string(values_.size()));
    }
    if (std_ > 0.0) {
        double sum = 0.0;
        for (double v : values_) sum += v;
        const double adv_mean = sum / static_cast<double>(values_.size());
        if (std::abs(adv_mean) > 1e-9) {
            throw ValidationError("normalized advantages should center on zero, mean is " +
                                  std::to_string(adv_mean));
        }
    }
}

}  // namespace procrit
