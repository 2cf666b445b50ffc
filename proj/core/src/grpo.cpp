#include "procrit/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "procrit/errors.hpp"

namespace procrit {

AdvantageSet group_advantages(const std::vector<double>& rewards, double epsilon) {
    const std::size_t n = rewards.size();
    if (n < 2) throw GroupTooSmall(n);
    for (double r : rewards) {
        if (!std::isfinite(r)) throw ValidationError("rewards must be finite");
    }

    // Shift by the leading element before any statistics; see header.
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = rewards[i] - rewards[0];

    double sum = 0.0;
    for (double s : shifted) sum += s;
    const double shifted_mean = sum / static_cast<double>(n);

    double var = 0.0;
    for (double s : shifted) {
        const double d = s - shifted_mean;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double sigma = std::sqrt(var);

    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = (shifted[i] - shifted_mean) / (sigma + epsilon);

    return AdvantageSet(std::move(values), rewards[0] + shifted_mean, sigma, epsilon);
}

std::vector<std::size_t> select_parents(const std::vector<bool>& correct_flags, int k, Rng& rng) {
    const int g = static_cast<int>(correct_flags.size());
    if (k < 1 || k > g) {
        throw ValidationError("cannot pick " + std::to_string(k) + " parents from " +
                              std::to_string(g) + " drafts");
    }

    std::vector<std::size_t> incorrect;
    std::vector<std::size_t> correct;
    for (std::size_t i = 0; i < correct_flags.size(); ++i) {
        (correct_flags[i] ? correct : incorrect).push_back(i);
    }
    rng.shuffle(incorrect);
    rng.shuffle(correct);

    int incorrect_take = std::min((k + 1) / 2, static_cast<int>(incorrect.size()));
    int correct_take = std::min(k / 2, static_cast<int>(correct.size()));
    int deficit = k - incorrect_take - correct_take;
    const int extra_incorrect =
        std::min(deficit, static_cast<int>(incorrect.size()) - incorrect_take);
    incorrect_take += extra_incorrect;
    correct_take += deficit - extra_incorrect;

    std::vector<std::size_t> picked;
    picked.insert(picked.end(), incorrect.begin(), incorrect.begin() + incorrect_take);
    picked.insert(picked.end(), correct.begin(), correct.begin() + correct_take);
    std::sort(picked.begin(), picked.end());
    return picked;
}

double clipped_surrogate(const TokenSequence& seq, double advantage, double clip_eps,
                         double kl_beta) {
    const std::size_t t = seq.new_logps.size();
    if (t == 0 || seq.old_logps.size() != t) throw LengthMismatch("old log-probs");
    const bool use_kl = kl_beta > 0.0;
    if (use_kl && !seq.has_ref()) throw MissingRef();
    if (seq.has_ref() && seq.ref_logps.size() != t) throw LengthMismatch("ref log-probs");

    double surrogate = 0.0;
    double kl = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
        const double rho = std::exp(seq.new_logps[i] - seq.old_logps[i]);
        const double unclipped = rho * advantage;
        const double clipped = std::clamp(rho, 1.0 - clip_eps, 1.0 + clip_eps) * advantage;
        surrogate += std::min(unclipped, clipped);
        if (use_kl) {
            const double d = seq.ref_logps[i] - seq.new_logps[i];
            kl += std::exp(d) - d - 1.0;
        }
    }
    surrogate /= static_cast<double>(t);
    kl /= static_cast<double>(t);
    return -surrogate + kl_beta * kl;
}

namespace {

double mean_of(const std::vector<double>& values) {
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

}  // namespace

double dual_stage_loss(const std::vector<double>& draft_losses,
                       const std::vector<std::vector<double>>& revise_losses, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw ValidationError("lambda must lie in [0,1]");
    if (draft_losses.empty()) throw EmptyStage("draft");
    for (const auto& group : revise_losses) {
        if (group.empty()) throw EmptyStage("revise");
    }
    if (revise_losses.empty() && lambda != 0.0) throw EmptyStage("revise");

    double revise_term = 0.0;
    if (!revise_losses.empty()) {
        for (const auto& group : revise_losses) revise_term += mean_of(group);
        revise_term /= static_cast<double>(revise_losses.size());
    }
    return (1.0 - lambda) * mean_of(draft_losses) + lambda * revise_term;
}

// ============================================================================
// toy policy
// ============================================================================

ToyPolicy ToyPolicy::zeros(int num_states, int vocab_size) {
    ToyPolicy p;
    p.num_states = num_states;
    p.vocab_size = vocab_size;
    p.logits.assign(static_cast<std::size_t>(num_states) * vocab_size, 0.0);
    return p;
}

ToyPolicy ToyPolicy::random(int num_states, int vocab_size, Rng& rng, double scale) {
    ToyPolicy p = zeros(num_states, vocab_size);
    for (double& l : p.logits) l = scale * (2.0 * rng.unit() - 1.0);
    return p;
}

namespace {

void check_row(const ToyPolicy& policy, int state) {
    if (state < 0 || state >= policy.num_states) throw IndexOutOfRange("policy state row");
}

double row_logsumexp(const ToyPolicy& policy, int state) {
    double max_logit = policy.logit(state, 0);
    for (int v = 1; v < policy.vocab_size; ++v) max_logit = std::max(max_logit, policy.logit(state, v));
    double sum = 0.0;
    for (int v = 0; v < policy.vocab_size; ++v) sum += std::exp(policy.logit(state, v) - max_logit);
    return max_logit + std::log(sum);
}

}  // namespace

double toy_logprob(const ToyPolicy& policy, int state, int token) {
    check_row(policy, state);
    if (token < 0 || token >= policy.vocab_size) throw IndexOutOfRange("vocabulary token");
    return policy.logit(state, token) - row_logsumexp(policy, state);
}

std::vector<double> toy_softmax_row(const ToyPolicy& policy, int state) {
    check_row(policy, state);
    const double lse = row_logsumexp(policy, state);
    std::vector<double> probs(policy.vocab_size);
    for (int v = 0; v < policy.vocab_size; ++v) probs[v] = std::exp(policy.logit(state, v) - lse);
    return probs;
}

// ============================================================================
// toy rollouts
// ============================================================================

int toy_state_count(const EngineConfig& cfg) {
    return cfg.toy.shared_revision_state ? cfg.toy.states : 2 * cfg.toy.states;
}

namespace {

int sample_categorical(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.unit();
    double cum = 0.0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
        cum += probs[v];
        if (u < cum) return static_cast<int>(v);
    }
    return static_cast<int>(probs.size()) - 1;
}

ToySequence roll_sequence(const ToyPolicy& policy, int sample, int state, ToyStage stage,
                          int group, int target, int length, Rng& rng) {
    const std::vector<double> probs = toy_softmax_row(policy, state);
    ToySequence seq;
    seq.sample = sample;
    seq.state = state;
    seq.stage = stage;
    seq.group = group;
    int hits = 0;
    for (int t = 0; t < length; ++t) {
        const int token = sample_categorical(probs, rng);
        seq.tokens.push_back(token);
        const double logp = toy_logprob(policy, state, token);
        seq.old_logps.push_back(logp);
        seq.ref_logps.push_back(logp);
        if (token == target) ++hits;
    }
    seq.reward = static_cast<double>(hits) / length;
    return seq;
}

}  // namespace

ToyRollout toy_rollout(const ToyPolicy& policy, const EngineConfig& cfg, Rng& sample_rng,
                       Rng& parent_rng) {
    const int samples = cfg.toy.states;
    const int vocab = cfg.toy.vocab;
    if (policy.num_states < toy_state_count(cfg) || policy.vocab_size != vocab) {
        throw ShapeMismatch("policy shape does not fit the toy task");
    }

    ToyRollout out;
    out.batch.num_samples = samples;
    out.batch.num_groups = cfg.parents_per_group;

    double draft_sum = 0.0;
    double revise_sum = 0.0;
    int draft_count = 0;
    int revise_count = 0;

    for (int s = 0; s < samples; ++s) {
        const int target = s % vocab;
        const int draft_row = s;
        const int revise_row = cfg.toy.shared_revision_state ? s : samples + s;

        std::vector<ToySequence> drafts;
        std::vector<double> draft_rewards;
        for (int g = 0; g < cfg.group_size; ++g) {
            drafts.push_back(roll_sequence(policy, s, draft_row, ToyStage::Draft, -1, target,
                                           cfg.toy.length, sample_rng));
            draft_rewards.push_back(drafts.back().reward);
        }
        const AdvantageSet draft_adv = group_advantages(draft_rewards, cfg.adv_epsilon);
        for (int g = 0; g < cfg.group_size; ++g) {
            drafts[g].advantage = draft_adv.values()[g];
            draft_sum += drafts[g].reward;
            ++draft_count;
        }

        std::vector<bool> correct_flags;
        for (double r : draft_rewards) correct_flags.push_back(r >= 0.5);
        const std::vector<std::size_t> parents =
            select_parents(correct_flags, cfg.parents_per_group, parent_rng);

        for (const ToySequence& seq : drafts) out.batch.sequences.push_back(seq);

        for (int k = 0; k < static_cast<int>(parents.size()); ++k) {
            std::vector<ToySequence> revisions;
            std::vector<double> revise_rewards;
            for (int m = 0; m < cfg.revisions_per_parent; ++m) {
                revisions.push_back(roll_sequence(policy, s, revise_row, ToyStage::Revise, k,
                                                  target, cfg.toy.length, sample_rng));
                revise_rewards.push_back(revisions.back().reward);
            }
            const AdvantageSet revise_adv = group_advantages(revise_rewards, cfg.adv_epsilon);
            for (int m = 0; m < cfg.revisions_per_parent; ++m) {
                revisions[m].advantage = revise_adv.values()[m];
                revise_sum += revisions[m].reward;
                ++revise_count;
                out.batch.sequences.push_back(revisions[m]);
            }
        }
    }

    out.mean_draft_reward = draft_count > 0 ? draft_sum / draft_count : 0.0;
    out.mean_revise_reward = revise_count > 0 ? revise_sum / revise_count : 0.0;
    return out;
}

// ============================================================================
// toy objective and gradient
// ============================================================================

namespace {

struct SampleBuckets {
    std::vector<double> draft_losses;
    std::vector<std::vector<double>> revise_losses;
};

double sequence_loss(const ToyPolicy& policy, const ToySequence& seq, const EngineConfig& cfg) {
    TokenSequence ts;
    for (int token : seq.tokens) ts.new_logps.push_back(toy_logprob(policy, seq.state, token));
    ts.old_logps = seq.old_logps;
    ts.ref_logps = seq.ref_logps;
    return clipped_surrogate(ts, seq.advantage, cfg.clip_epsilon, cfg.kl_beta);
}

}  // namespace

double toy_batch_loss(const ToyPolicy& policy, const ToyBatch& batch, const EngineConfig& cfg) {
    if (batch.num_samples <= 0) throw EmptyStage("draft");
    std::vector<SampleBuckets> buckets(batch.num_samples);
    for (auto& b : buckets) b.revise_losses.resize(batch.num_groups);

    for (const ToySequence& seq : batch.sequences) {
        if (seq.sample < 0 || seq.sample >= batch.num_samples) throw ShapeMismatch("sequence sample id");
        const double loss = sequence_loss(policy, seq, cfg);
        if (seq.stage == ToyStage::Draft) {
            buckets[seq.sample].draft_losses.push_back(loss);
        } else {
            if (seq.group < 0 || seq.group >= batch.num_groups) throw ShapeMismatch("sequence parent slot");
            buckets[seq.sample].revise_losses[seq.group].push_back(loss);
        }
    }

    double total = 0.0;
    for (const SampleBuckets& b : buckets) {
        total += dual_stage_loss(b.draft_losses, b.revise_losses, cfg.lambda);
    }
    return total / batch.num_samples;
}

std::vector<double> toy_dual_stage_grad(const ToyPolicy& policy, const ToyBatch& batch,
                                        const EngineConfig& cfg) {
    if (batch.num_samples <= 0) throw EmptyStage("draft");

    // Sequence counts per bucket fix the stage weights.
    std::vector<int> draft_counts(batch.num_samples, 0);
    std::vector<std::vector<int>> revise_counts(batch.num_samples,
                                                std::vector<int>(batch.num_groups, 0));
    for (const ToySequence& seq : batch.sequences) {
        if (seq.sample < 0 || seq.sample >= batch.num_samples) throw ShapeMismatch("sequence sample id");
        if (seq.stage == ToyStage::Draft) {
            ++draft_counts[seq.sample];
        } else {
            if (seq.group < 0 || seq.group >= batch.num_groups) throw ShapeMismatch("sequence parent slot");
            ++revise_counts[seq.sample][seq.group];
        }
    }

    std::vector<double> grad(policy.logits.size(), 0.0);
    const bool use_kl = cfg.kl_beta > 0.0;

    for (const ToySequence& seq : batch.sequences) {
        double weight = 0.0;
        if (seq.stage == ToyStage::Draft) {
            weight = (1.0 - cfg.lambda) / (static_cast<double>(batch.num_samples) *
                                           draft_counts[seq.sample]);
        } else {
            weight = cfg.lambda / (static_cast<double>(batch.num_samples) * batch.num_groups *
                                   revise_counts[seq.sample][seq.group]);
        }
        if (weight == 0.0) continue;

        check_row(policy, seq.state);
        const std::vector<double> probs = toy_softmax_row(policy, seq.state);
        const std::size_t t_count = seq.tokens.size();

        for (std::size_t t = 0; t < t_count; ++t) {
            const int token = seq.tokens[t];
            const double new_logp = toy_logprob(policy, seq.state, token);
            const double rho = std::exp(new_logp - seq.old_logps[t]);
            const double unclipped = rho * seq.advantage;
            const double clipped =
                std::clamp(rho, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * seq.advantage;

            // min() picks the unclipped branch on ties, matching the loss.
            const double dterm_dnew = unclipped <= clipped ? rho * seq.advantage : 0.0;
            const double dkl_dnew = use_kl ? 1.0 - std::exp(seq.ref_logps[t] - new_logp) : 0.0;
            const double dloss_dnew =
                (-dterm_dnew + cfg.kl_beta * dkl_dnew) / static_cast<double>(t_count);
            const double coeff = weight * dloss_dnew;

            grad[policy.index(seq.state, token)] += coeff;
            for (int v = 0; v < policy.vocab_size; ++v) {
                grad[policy.index(seq.state, v)] -= coeff * probs[v];
            }
        }
    }
    return grad;
}

std::vector<double> toy_fd_grad(const ToyPolicy& policy, const ToyBatch& batch,
                                const EngineConfig& cfg, double h) {
    ToyPolicy probe = policy;
    std::vector<double> grad(policy.logits.size(), 0.0);
    for (std::size_t i = 0; i < probe.logits.size(); ++i) {
        const double saved = probe.logits[i];
        probe.logits[i] = saved + h;
        const double up = toy_batch_loss(probe, batch, cfg);
        probe.logits[i] = saved - h;
        const double down = toy_batch_loss(probe, batch, cfg);
        probe.logits[i] = saved;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& fd) {
    if (analytic.size() != fd.size()) {
        throw LengthMismatch("gradient size mismatch in comparison");
    }
    double scale = 0.0;
    for (const double f : fd) scale = std::max(scale, std::abs(f));
    scale = std::max(scale, 1e-12);
    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / scale);
    }
    return worst;
}

// ============================================================================
// toy training loop
// ============================================================================

ToyTrainResult toy_train(const EngineConfig& cfg, std::uint64_t seed) {
    Rng init_rng(derive_seed(seed, "toy-init"));
    ToyTrainResult out;
    out.policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init_rng, 0.1);

    for (int iter = 0; iter <= cfg.toy.iterations; ++iter) {
        // Per-iteration streams: iteration i replays identically no matter
        // how earlier iterations consumed randomness.
        Rng sample_rng(derive_seed(seed, "toy-sample", static_cast<std::uint64_t>(iter)));
        Rng parent_rng(derive_seed(seed, "toy-parents", static_cast<std::uint64_t>(iter)));

        const ToyRollout rollout = toy_rollout(out.policy, cfg, sample_rng, parent_rng);
        const double loss = toy_batch_loss(out.policy, rollout.batch, cfg);
        out.trace.push_back(
            {iter, rollout.mean_draft_reward, rollout.mean_revise_reward, loss});

        if (iter == cfg.toy.iterations) break;
        const std::vector<double> grad = toy_dual_stage_grad(out.policy, rollout.batch, cfg);
        for (std::size_t i = 0; i < grad.size(); ++i) {
            out.policy.logits[i] -= cfg.toy.learning_rate * grad[i];
        }
    }
    return out;
}

void write_trace_csv(const std::vector<ToyTraceRow>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write trace: " + path);
    out << "iteration,mean_draft_reward,mean_revise_reward,loss\n";
    out << std::setprecision(12);
    for (const ToyTraceRow& row : trace) {
        out << row.iteration << "," << row.mean_draft_reward << "," << row.mean_revise_reward
            << "," << row.loss << "\n";
    }
}

}  // namespace procrit
