#pragma once

// Group-relative advantage computation, balanced parent sampling, the
// clipped surrogate objective, and a toy softmax policy that exists to
// verify the objective's gradient and to run desk-scale training. Real
// model updates happen in an external trainer; this module defines the
// math that trainer must agree with.

#include <cstdint>
#include <string>
#include <vector>

#include "procrit/config.hpp"
#include "procrit/rng.hpp"
#include "procrit/types.hpp"

namespace procrit {

// ============================================================================
// advantages and parent selection
// ============================================================================

// A_i = (r_i - mean) / (std + epsilon), population (divisor N) std.
//
// Internally the rewards are first shifted by the group's leading element,
// which makes the result exactly invariant under a constant shift of the
// whole group whenever the shifted inputs are themselves exact (true for
// the half-integer rewards this engine produces): (r_i + c) - (r_0 + c)
// rounds to r_i - r_0 bit for bit. A naive mean subtraction loses that
// property one ulp at a time.
//
// Throws GroupTooSmall below two members, ValidationError on non-finite
// rewards.
AdvantageSet group_advantages(const std::vector<double>& rewards, double epsilon);

// Picks K distinct draft indices for revision, targeting ceil(K/2) from
// the incorrect class and floor(K/2) from the correct class, uniformly
// without replacement within each class; a short class hands its deficit
// to the other. Deterministic for a fixed rng state; indices ascend.
std::vector<std::size_t> select_parents(const std::vector<bool>& correct_flags, int k, Rng& rng);

// ============================================================================
// objective
// ============================================================================

struct TokenSequence {
    std::vector<double> new_logps;
    std::vector<double> old_logps;
    std::vector<double> ref_logps;  // may be empty when no KL term is used

    bool has_ref() const { return !ref_logps.empty(); }
};

// Per-token clipped policy-ratio term, token-mean aggregated, returned as
// a loss (lower is better):
//   rho_t = exp(new_t - old_t)
//   surrogate = mean_t min(rho_t * A, clip(rho_t, 1-eps, 1+eps) * A)
//   kl_t = exp(ref_t - new_t) - (ref_t - new_t) - 1
//   loss = -surrogate + kl_beta * mean_t kl_t
// Throws LengthMismatch on ragged inputs, MissingRef when kl_beta > 0
// without reference log-probs.
double clipped_surrogate(const TokenSequence& seq, double advantage, double clip_eps,
                         double kl_beta);

// (1 - lambda) * mean(draft_losses) + lambda * (1/K) * sum_k mean(revise_losses[k]).
// Throws EmptyStage when the draft list or any inner revise list is empty,
// or when the revise stage is missing entirely while lambda > 0.
double dual_stage_loss(const std::vector<double>& draft_losses,
                       const std::vector<std::vector<double>>& revise_losses, double lambda);

// ============================================================================
// toy policy
// ============================================================================

// A tabular softmax policy: one categorical distribution per state.
struct ToyPolicy {
    int num_states = 0;
    int vocab_size = 0;
    std::vector<double> logits;  // row-major num_states x vocab_size

    static ToyPolicy zeros(int num_states, int vocab_size);
    static ToyPolicy random(int num_states, int vocab_size, Rng& rng, double scale = 1.0);

    double logit(int state, int token) const { return logits[index(state, token)]; }
    double& logit(int state, int token) { return logits[index(state, token)]; }

    std::size_t index(int state, int token) const {
        return static_cast<std::size_t>(state) * vocab_size + token;
    }
};

// Log softmax of the state's row at the token. Throws IndexOutOfRange.
double toy_logprob(const ToyPolicy& policy, int state, int token);

// Softmax probabilities of one row (helper for sampling and gradients).
std::vector<double> toy_softmax_row(const ToyPolicy& policy, int state);

// ============================================================================
// toy rollouts and training
// ============================================================================

enum class ToyStage : std::uint8_t { Draft, Revise };

struct ToySequence {
    int sample = 0;  // synthetic sample id; grouping key for advantages
    int state = 0;   // policy row the tokens came from
    ToyStage stage = ToyStage::Draft;
    int group = -1;  // parent slot k for revisions
    std::vector<int> tokens;
    std::vector<double> old_logps;
    std::vector<double> ref_logps;
    double reward = 0.0;
    double advantage = 0.0;
};

struct ToyBatch {
    std::vector<ToySequence> sequences;
    int num_samples = 0;
    int num_groups = 0;  // K, identical for every sample
};

// The synthetic task: sample s wants every emitted token to equal s mod
// vocab; the reward is the matching fraction. Drafts draw from row s,
// revisions from row num_samples + s (or row s again when
// cfg.toy.shared_revision_state is set, collapsing both stages onto the
// same parameters).
struct ToyRollout {
    ToyBatch batch;
    double mean_draft_reward = 0.0;
    double mean_revise_reward = 0.0;
};

ToyRollout toy_rollout(const ToyPolicy& policy, const EngineConfig& cfg, Rng& sample_rng,
                       Rng& parent_rng);

// Mean over samples of the per-sample dual-stage loss, with new log-probs
// read from `policy` and old/ref log-probs from the recorded batch.
double toy_batch_loss(const ToyPolicy& policy, const ToyBatch& batch, const EngineConfig& cfg);

// Analytic gradient of toy_batch_loss with respect to every logit.
// Throws ShapeMismatch when a recorded state row is outside the policy.
std::vector<double> toy_dual_stage_grad(const ToyPolicy& policy, const ToyBatch& batch,
                                        const EngineConfig& cfg);

// Central-difference gradient of toy_batch_loss, one loss pair per logit.
// Slow by design; exists to cross-check toy_dual_stage_grad.
std::vector<double> toy_fd_grad(const ToyPolicy& policy, const ToyBatch& batch,
                                const EngineConfig& cfg, double h = 1e-5);

// max_i |a_i - f_i| scaled by the largest |f_i| (plus a floor so an
// all-zero gradient compares clean). The verification figure of merit.
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& fd);

struct ToyTraceRow {
    int iteration = 0;
    double mean_draft_reward = 0.0;
    double mean_revise_reward = 0.0;
    double loss = 0.0;
};

struct ToyTrainResult {
    std::vector<ToyTraceRow> trace;
    ToyPolicy policy;
};

// Plain gradient descent on the dual-stage loss, one rollout per
// iteration. The trace has cfg.toy.iterations + 1 rows; row 0 is the
// untrained policy's rollout.
ToyTrainResult toy_train(const EngineConfig& cfg, std::uint64_t seed);

void write_trace_csv(const std::vector<ToyTraceRow>& trace, const std::string& path);

// How many policy rows a config's toy task needs.
int toy_state_count(const EngineConfig& cfg);

}  // namespace procrit
