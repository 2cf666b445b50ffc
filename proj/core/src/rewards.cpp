#include "procrit/rewards.hpp"

#include "procrit/parsing.hpp"

namespace procrit {

int accuracy_reward(const Prediction& pred, Label gold) {
    return matches(pred, gold) ? 1 : 0;
}

double eval_reward(const CriticScore& score, double divisor) {
    if (!score.valid()) return 0.0;
    return static_cast<double>(*score.value) / divisor;
}

int improvement_reward(const Prediction& draft_pred, const Prediction& revise_pred, Label gold) {
    if (!matches(draft_pred, gold) && matches(revise_pred, gold)) return 1;
    if (!same_prediction(revise_pred, draft_pred) && !matches(revise_pred, gold)) return -1;
    return 0;
}

int score_alignment_reward(const CriticScore& score, const Prediction& pred, Label gold) {
    if (!score.valid()) return -1;
    return accuracy_reward(pred, gold) == 1 ? *score.value - 1 : 1 - *score.value;
}

int actionability_reward(const Prediction& draft_pred, const Prediction& revise_pred, Label gold) {
    return improvement_reward(draft_pred, revise_pred, gold);
}

RewardBreakdown draft_reward(const ReasoningOutput& out, const Critique& crit, Label gold,
                             double eval_divisor) {
    return RewardBreakdown({
        {"acc", static_cast<double>(accuracy_reward(out.prediction, gold))},
        {"fmt", static_cast<double>(format_reward(out))},
        {"eval", eval_reward(crit.score, eval_divisor)},
    });
}

RewardBreakdown revise_reward(const Prediction& draft_pred, const ReasoningOutput& out,
                              Label gold) {
    return RewardBreakdown({
        {"acc", static_cast<double>(accuracy_reward(out.prediction, gold))},
        {"fmt", static_cast<double>(format_reward(out))},
        {"imp", static_cast<double>(improvement_reward(draft_pred, out.prediction, gold))},
    });
}

RewardBreakdown critic_reward(const Critique& crit, const Prediction& draft_pred,
                              const Prediction& revise_pred, Label gold) {
    return RewardBreakdown({
        {"fmt", static_cast<double>(format_reward(crit))},
        {"align", static_cast<double>(score_alignment_reward(crit.score, draft_pred, gold))},
        {"act", static_cast<double>(actionability_reward(draft_pred, revise_pred, gold))},
    });
}

RewardBreakdown critic_reward_unprobed(const Critique& crit, const Prediction& draft_pred,
                                       Label gold) {
    return RewardBreakdown({
        {"fmt", static_cast<double>(format_reward(crit))},
        {"align", static_cast<double>(score_alignment_reward(crit.score, draft_pred, gold))},
        {"act", 0.0},
    });
}

}  // namespace procrit
