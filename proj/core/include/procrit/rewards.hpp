#pragma once

// Scalar reward functions for both agents plus the three composites.
// Everything here is pure and operates on parsed outputs only; no backend
// calls happen at reward time.

#include "procrit/types.hpp"

namespace procrit {

// 1 iff pred is Valid and equals gold.
int accuracy_reward(const Prediction& pred, Label gold);

// Critic quality score normalized into [0,1]: s/divisor for a Valid score,
// 0 for Invalid. The default divisor maps {0,1,2} onto {0, 0.5, 1}.
double eval_reward(const CriticScore& score, double divisor = 2.0);

// +1 when the revision fixes a wrong draft, -1 when it moves away from a
// prediction that was not wrong in the same way (changed and still not
// gold), 0 otherwise. The fix test runs first; with three-valued
// predictions that order is load-bearing.
int improvement_reward(const Prediction& draft_pred, const Prediction& revise_pred, Label gold);

// Valid score s: s-1 when the critiqued prediction is correct, 1-s when it
// is not. An Invalid score always earns -1.
int score_alignment_reward(const CriticScore& score, const Prediction& pred, Label gold);

// Same case table as improvement_reward, applied to the frozen-proposal
// probe revision; delegation keeps the two tables from ever diverging.
int actionability_reward(const Prediction& draft_pred, const Prediction& revise_pred, Label gold);

// Composite rewards. Component names are the batch-file keys.
RewardBreakdown draft_reward(const ReasoningOutput& out, const Critique& crit, Label gold,
                             double eval_divisor = 2.0);
RewardBreakdown revise_reward(const Prediction& draft_pred, const ReasoningOutput& out,
                              Label gold);
RewardBreakdown critic_reward(const Critique& crit, const Prediction& draft_pred,
                              const Prediction& revise_pred, Label gold);

// Critic composite when the actionability probe was skipped because the
// feedback was empty: act pins to 0 instead of scoring a phantom revision
// (which the case table would count as damage).
RewardBreakdown critic_reward_unprobed(const Critique& crit, const Prediction& draft_pred,
                                       Label gold);

}  // namespace procrit
