#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "procrit/config.hpp"
#include "procrit/errors.hpp"
#include "procrit/grpo.hpp"
#include "procrit/rng.hpp"
#include "test_helpers.hpp"

using namespace procrit;

// ============================================================================
// independent oracles
// ============================================================================

namespace {

// Long-double reimplementation of the advantage definition, kept separate
// from the library's shift-then-normalize arithmetic on purpose.
std::vector<long double> advantage_oracle(const std::vector<double>& rewards,
                                          long double epsilon) {
    const std::size_t n = rewards.size();
    long double mean = 0.0L;
    for (const double r : rewards) mean += r;
    mean /= static_cast<long double>(n);
    long double var = 0.0L;
    for (const double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<long double>(n);
    const long double std_dev = std::sqrt(var);
    std::vector<long double> out;
    for (const double r : rewards) out.push_back((r - mean) / (std_dev + epsilon));
    return out;
}

// Rewards of the half-integer kind the engine actually produces.
std::vector<double> dyadic_rewards(std::mt19937_64& rng, std::size_t n) {
    std::vector<double> out;
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(static_cast<double>(static_cast<int>(rng() % 13) - 6) * 0.5);
    }
    return out;
}

TokenSequence make_seq(std::vector<double> new_lp, std::vector<double> old_lp,
                       std::vector<double> ref_lp = {}) {
    TokenSequence seq;
    seq.new_logps = std::move(new_lp);
    seq.old_logps = std::move(old_lp);
    seq.ref_logps = std::move(ref_lp);
    return seq;
}

EngineConfig toy_config() {
    EngineConfig cfg;
    cfg.toy.states = 3;
    cfg.toy.vocab = 4;
    cfg.toy.length = 3;
    cfg.group_size = 6;
    cfg.parents_per_group = 2;
    cfg.revisions_per_parent = 3;
    return cfg;
}

}  // namespace

// ============================================================================
// group advantages
// ============================================================================

TEST_CASE("advantages match the long-double oracle") {
    const std::vector<double> rewards{1.0, 2.0, 3.0};
    const auto got = group_advantages(rewards, 1e-4);
    const auto want = advantage_oracle(rewards, 1e-4L);
    REQUIRE(got.values().size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(std::abs(got.values()[i] - static_cast<double>(want[i])) < 1e-12);
    }
    CHECK(got.mean() == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("a constant group yields exactly zero advantages") {
    const auto adv = group_advantages({2.0, 2.0, 2.0}, 1e-4);
    for (const double a : adv.values()) CHECK(a == 0.0);
    CHECK(adv.std_dev() == 0.0);
}

TEST_CASE("advantage properties hold over 1000 random groups") {
    std::mt19937_64 rng(20260815);
    for (int round = 0; round < 1000; ++round) {
        const std::size_t n = 2 + rng() % 9;
        const auto rewards = dyadic_rewards(rng, n);

        const auto adv = group_advantages(rewards, 1e-4);

        // Zero mean within 1e-9.
        double sum = 0.0;
        for (const double a : adv.values()) sum += a;
        CHECK(std::abs(sum / static_cast<double>(n)) <= 1e-9);

        // Exact shift invariance: the same bits after any half-integer shift.
        const double shift = static_cast<double>(static_cast<int>(rng() % 41) - 20) * 0.5;
        std::vector<double> shifted = rewards;
        for (double& r : shifted) r += shift;
        const auto adv_shifted = group_advantages(shifted, 1e-4);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(adv.values()[i] == adv_shifted.values()[i]);
        }

        // Agreement with the oracle.
        const auto want = advantage_oracle(rewards, 1e-4L);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(std::abs(adv.values()[i] - static_cast<double>(want[i])) <= 1e-9);
        }
    }
}

TEST_CASE("advantage rejections") {
    CHECK_THROWS_AS(group_advantages({1.0}, 1e-4), GroupTooSmall);
    CHECK_THROWS_AS(group_advantages({}, 1e-4), GroupTooSmall);
    CHECK_THROWS_AS(group_advantages({1.0, std::nan("")}, 1e-4), ValidationError);
    CHECK_THROWS_AS(group_advantages({1.0, INFINITY}, 1e-4), ValidationError);
}

// ============================================================================
// parent selection
// ============================================================================

TEST_CASE("select_parents splits its quota between the classes") {
    const std::vector<bool> flags{true, false, true, false, true, false};

    Rng rng(derive_seed(1, "parents"));
    const auto picked = select_parents(flags, 2, rng);
    REQUIRE(picked.size() == 2);
    CHECK(picked[0] < picked[1]);
    int correct = 0;
    int incorrect = 0;
    for (const std::size_t i : picked) (flags[i] ? correct : incorrect)++;
    CHECK(correct == 1);
    CHECK(incorrect == 1);
}

TEST_CASE("an odd quota leans toward the incorrect class") {
    const std::vector<bool> flags{true, true, true, false, false, false};
    Rng rng(derive_seed(2, "parents"));
    const auto picked = select_parents(flags, 3, rng);
    int incorrect = 0;
    for (const std::size_t i : picked) {
        if (!flags[i]) ++incorrect;
    }
    CHECK(incorrect == 2);
}

TEST_CASE("a short class hands its deficit to the other") {
    Rng rng(derive_seed(3, "parents"));
    const auto all_correct = select_parents({true, true, true, true}, 3, rng);
    CHECK(all_correct.size() == 3);

    const auto all_wrong = select_parents({false, false, false, false}, 3, rng);
    CHECK(all_wrong.size() == 3);

    // One incorrect draft available, quota of two: the correct class covers.
    const auto lopsided = select_parents({true, false, true, true}, 3, rng);
    CHECK(lopsided.size() == 3);
    CHECK(std::count(lopsided.begin(), lopsided.end(), std::size_t{1}) == 1);
}

TEST_CASE("select_parents is reproducible, distinct, in range, ascending") {
    std::mt19937_64 meta(99);
    for (int round = 0; round < 200; ++round) {
        const std::size_t g = 2 + meta() % 8;
        std::vector<bool> flags;
        for (std::size_t i = 0; i < g; ++i) flags.push_back(meta() % 2 == 0);
        const int k = 1 + static_cast<int>(meta() % g);
        const std::uint64_t seed = meta();

        Rng r1(seed);
        Rng r2(seed);
        const auto a = select_parents(flags, k, r1);
        const auto b = select_parents(flags, k, r2);
        CHECK(a == b);
        CHECK(a.size() == static_cast<std::size_t>(k));
        CHECK(std::is_sorted(a.begin(), a.end()));
        CHECK(std::set<std::size_t>(a.begin(), a.end()).size() == a.size());
        for (const std::size_t i : a) CHECK(i < g);
    }
}

TEST_CASE("select_parents rejects impossible quotas") {
    Rng rng(1);
    CHECK_THROWS_AS(select_parents({true, false}, 3, rng), ValidationError);
    CHECK_THROWS_AS(select_parents({true, false}, 0, rng), ValidationError);
}

// ============================================================================
// clipped surrogate
// ============================================================================

TEST_CASE("surrogate hand cases") {
    // On-policy, positive advantage: plain -rho * A = -1.
    CHECK(clipped_surrogate(make_seq({0.0}, {0.0}), 1.0, 0.2, 0.0) ==
          doctest::Approx(-1.0).epsilon(1e-12));

    // Ratio 1.5 with a positive advantage clips down to 1.2.
    CHECK(clipped_surrogate(make_seq({std::log(1.5)}, {0.0}), 1.0, 0.2, 0.0) ==
          doctest::Approx(-1.2).epsilon(1e-12));

    // Ratio 0.5 with a negative advantage: min picks the clipped branch.
    CHECK(clipped_surrogate(make_seq({std::log(0.5)}, {0.0}), -1.0, 0.2, 0.0) ==
          doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("token-mean aggregation, not token-sum") {
    // Two identical tokens leave the per-token value unchanged.
    const auto seq = make_seq({0.0, 0.0}, {0.0, 0.0});
    CHECK(clipped_surrogate(seq, 1.0, 0.2, 0.0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("the kl term vanishes when the policy sits on the reference") {
    const auto seq = make_seq({-0.5, -1.0}, {-0.5, -1.0}, {-0.5, -1.0});
    CHECK(clipped_surrogate(seq, 1.0, 0.2, 0.5) ==
          clipped_surrogate(seq, 1.0, 0.2, 0.0));
}

TEST_CASE("the k3 kl estimator is nonnegative") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> logp(-3.0, 0.0);
    for (int i = 0; i < 200; ++i) {
        const double new_lp = logp(rng);
        const double ref_lp = logp(rng);
        const auto seq = make_seq({new_lp}, {new_lp}, {ref_lp});
        // advantage 0 isolates the kl term.
        CHECK(clipped_surrogate(seq, 0.0, 0.2, 1.0) >= -1e-15);
    }
}

TEST_CASE("clip inactivity: ratios inside the band equal the unclipped value") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> delta(-0.18, 0.18);  // |log rho| < log(1.2)
    for (int i = 0; i < 200; ++i) {
        std::vector<double> new_lp;
        std::vector<double> old_lp;
        double unclipped = 0.0;
        const double adv = delta(rng) * 10.0;
        for (int t = 0; t < 4; ++t) {
            const double base = delta(rng) - 1.0;
            const double d = delta(rng) * 0.5;  // keeps rho well inside [0.8, 1.2]
            old_lp.push_back(base);
            new_lp.push_back(base + d);
            unclipped += std::exp(d) * adv;
        }
        unclipped /= 4.0;
        CHECK(clipped_surrogate(make_seq(new_lp, old_lp), adv, 0.2, 0.0) ==
              doctest::Approx(-unclipped).epsilon(1e-12));
    }
}

TEST_CASE("pessimism: the clipped loss never undercuts the unclipped loss") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> logp(-2.0, 0.0);
    std::uniform_real_distribution<double> advd(-3.0, 3.0);
    for (int i = 0; i < 500; ++i) {
        std::vector<double> new_lp;
        std::vector<double> old_lp;
        for (int t = 0; t < 3; ++t) {
            new_lp.push_back(logp(rng));
            old_lp.push_back(logp(rng));
        }
        const double adv = advd(rng);
        const double clipped_loss = clipped_surrogate(make_seq(new_lp, old_lp), adv, 0.2, 0.0);

        double unclipped = 0.0;
        for (int t = 0; t < 3; ++t) unclipped += std::exp(new_lp[t] - old_lp[t]) * adv;
        const double unclipped_loss = -unclipped / 3.0;
        CHECK(clipped_loss >= unclipped_loss - 1e-12);
    }
}

TEST_CASE("surrogate input validation") {
    CHECK_THROWS_AS(clipped_surrogate(make_seq({}, {}), 1.0, 0.2, 0.0), LengthMismatch);
    CHECK_THROWS_AS(clipped_surrogate(make_seq({0.0}, {0.0, 0.0}), 1.0, 0.2, 0.0),
                    LengthMismatch);
    CHECK_THROWS_AS(clipped_surrogate(make_seq({0.0}, {0.0}), 1.0, 0.2, 0.5), MissingRef);
    CHECK_THROWS_AS(clipped_surrogate(make_seq({0.0}, {0.0}, {0.0, 0.0}), 1.0, 0.2, 0.0),
                    LengthMismatch);
}

// ============================================================================
// dual-stage objective
// ============================================================================

TEST_CASE("dual stage blends the two stages by lambda") {
    CHECK(dual_stage_loss({-1.0}, {{-2.0}, {0.0}}, 0.5) ==
          doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(dual_stage_loss({-1.0, -3.0}, {{-10.0}}, 0.0) ==
          doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(dual_stage_loss({-10.0}, {{-1.0}, {-3.0}}, 1.0) ==
          doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("dual stage empty-input taxonomy") {
    CHECK_THROWS_AS(dual_stage_loss({}, {{-1.0}}, 0.5), EmptyStage);
    CHECK_THROWS_AS(dual_stage_loss({-1.0}, {{}}, 0.5), EmptyStage);
    CHECK_THROWS_AS(dual_stage_loss({-1.0}, {}, 0.5), EmptyStage);
    // Draft-only optimization does not need a revise stage at all.
    CHECK(dual_stage_loss({-1.0}, {}, 0.0) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(dual_stage_loss({-1.0}, {{-1.0}}, 1.5), ValidationError);
}

// ============================================================================
// toy policy
// ============================================================================

TEST_CASE("toy logprob agrees with softmax arithmetic") {
    const ToyPolicy uniform = ToyPolicy::zeros(2, 4);
    CHECK(toy_logprob(uniform, 0, 2) == doctest::Approx(-std::log(4.0)).epsilon(1e-12));

    ToyPolicy skewed = ToyPolicy::zeros(1, 2);
    skewed.logit(0, 1) = std::log(3.0);
    CHECK(toy_logprob(skewed, 0, 1) == doctest::Approx(std::log(0.75)).epsilon(1e-12));
    CHECK(toy_logprob(skewed, 0, 0) == doctest::Approx(std::log(0.25)).epsilon(1e-12));

    CHECK_THROWS_AS(toy_logprob(uniform, 2, 0), IndexOutOfRange);
    CHECK_THROWS_AS(toy_logprob(uniform, 0, 4), IndexOutOfRange);
}

TEST_CASE("softmax rows normalize") {
    Rng rng(5);
    const ToyPolicy policy = ToyPolicy::random(3, 5, rng, 2.0);
    for (int s = 0; s < 3; ++s) {
        const auto probs = toy_softmax_row(policy, s);
        double total = 0.0;
        for (const double p : probs) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

// ============================================================================
// gradient verification against a test-local finite-difference oracle
// ============================================================================

namespace {

// Central differences over toy_batch_loss, written here so the check does
// not lean on the library's own finite-difference helper.
std::vector<double> fd_oracle(const ToyPolicy& policy, const ToyBatch& batch,
                              const EngineConfig& cfg, double h) {
    ToyPolicy probe = policy;
    std::vector<double> grad(policy.logits.size());
    for (std::size_t i = 0; i < grad.size(); ++i) {
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

double relative_gap(const std::vector<double>& a, const std::vector<double>& b) {
    double scale = 1e-12;
    for (const double v : b) scale = std::max(scale, std::abs(v));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("analytic gradient matches finite differences across 20 seeds") {
    const EngineConfig cfg = toy_config();
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng init(derive_seed(seed, "toy-init"));
        const ToyPolicy policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init, 0.5);
        Rng sample_rng(derive_seed(seed, "toy-sample", 0));
        Rng parent_rng(derive_seed(seed, "toy-parents", 0));
        const ToyRollout rollout = toy_rollout(policy, cfg, sample_rng, parent_rng);

        const auto analytic = toy_dual_stage_grad(policy, rollout.batch, cfg);
        const auto fd = fd_oracle(policy, rollout.batch, cfg, 1e-5);
        INFO("seed ", seed);
        CHECK(relative_gap(analytic, fd) < 1e-5);
    }
}

TEST_CASE("gradient check also holds off-policy and with kl active") {
    EngineConfig cfg = toy_config();
    cfg.kl_beta = 0.1;
    Rng init(derive_seed(77, "toy-init"));
    ToyPolicy policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init, 0.5);
    Rng sample_rng(derive_seed(77, "toy-sample", 0));
    Rng parent_rng(derive_seed(77, "toy-parents", 0));
    const ToyRollout rollout = toy_rollout(policy, cfg, sample_rng, parent_rng);

    // Move the policy away from the rollout distribution so the ratios,
    // the clip branches, and the kl term all carry signal.
    Rng wiggle(123);
    for (double& logit : policy.logits) logit += (wiggle.unit() - 0.5) * 0.3;

    const auto analytic = toy_dual_stage_grad(policy, rollout.batch, cfg);
    const auto fd = fd_oracle(policy, rollout.batch, cfg, 1e-5);
    CHECK(relative_gap(analytic, fd) < 1e-5);
}

TEST_CASE("zero advantages with no kl produce a zero gradient") {
    EngineConfig cfg = toy_config();
    cfg.kl_beta = 0.0;
    Rng init(derive_seed(5, "toy-init"));
    const ToyPolicy policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init, 0.5);
    Rng sample_rng(derive_seed(5, "toy-sample", 0));
    Rng parent_rng(derive_seed(5, "toy-parents", 0));
    ToyRollout rollout = toy_rollout(policy, cfg, sample_rng, parent_rng);
    for (ToySequence& seq : rollout.batch.sequences) seq.advantage = 0.0;

    for (const double g : toy_dual_stage_grad(policy, rollout.batch, cfg)) {
        CHECK(g == 0.0);
    }
}

TEST_CASE("reward shifts before advantage computation leave the gradient alone") {
    // Bitwise shift invariance needs exact inputs: with length 4 the
    // matching-fraction rewards are quarters, so reward + 7.5 is exact.
    EngineConfig cfg = toy_config();
    cfg.toy.length = 4;
    Rng init(derive_seed(9, "toy-init"));
    const ToyPolicy policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init, 0.5);
    Rng sample_rng(derive_seed(9, "toy-sample", 0));
    Rng parent_rng(derive_seed(9, "toy-parents", 0));
    const ToyRollout base = toy_rollout(policy, cfg, sample_rng, parent_rng);

    // Recompute advantages from shifted rewards, one group at a time.
    ToyBatch shifted = base.batch;
    for (int sample = 0; sample < shifted.num_samples; ++sample) {
        std::vector<double> rewards;
        std::vector<ToySequence*> members;
        for (ToySequence& seq : shifted.sequences) {
            if (seq.sample == sample && seq.stage == ToyStage::Draft) {
                rewards.push_back(seq.reward + 7.5);
                members.push_back(&seq);
            }
        }
        const auto adv = group_advantages(rewards, cfg.adv_epsilon);
        for (std::size_t i = 0; i < members.size(); ++i) {
            members[i]->advantage = adv.values()[i];
        }
    }

    const auto g1 = toy_dual_stage_grad(policy, base.batch, cfg);
    const auto g2 = toy_dual_stage_grad(policy, shifted, cfg);
    REQUIRE(g1.size() == g2.size());
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("library finite-difference helper and comparison figure behave") {
    const EngineConfig cfg = toy_config();
    Rng init(derive_seed(21, "toy-init"));
    const ToyPolicy policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init, 0.5);
    Rng sample_rng(derive_seed(21, "toy-sample", 0));
    Rng parent_rng(derive_seed(21, "toy-parents", 0));
    const ToyRollout rollout = toy_rollout(policy, cfg, sample_rng, parent_rng);

    const auto analytic = toy_dual_stage_grad(policy, rollout.batch, cfg);
    const auto fd = toy_fd_grad(policy, rollout.batch, cfg);
    CHECK(max_relative_error(analytic, fd) < 1e-5);
    CHECK(max_relative_error(fd, fd) == 0.0);
    CHECK_THROWS_AS(max_relative_error({1.0}, {1.0, 2.0}), LengthMismatch);
}

// ============================================================================
// toy rollouts and training
// ============================================================================

TEST_CASE("toy rollouts have the advertised group structure") {
    const EngineConfig cfg = toy_config();
    Rng init(derive_seed(31, "toy-init"));
    const ToyPolicy policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init, 0.2);
    Rng sample_rng(derive_seed(31, "toy-sample", 0));
    Rng parent_rng(derive_seed(31, "toy-parents", 0));
    const ToyRollout rollout = toy_rollout(policy, cfg, sample_rng, parent_rng);

    CHECK(rollout.batch.num_samples == cfg.toy.states);
    CHECK(rollout.batch.num_groups == cfg.parents_per_group);
    const std::size_t expected =
        static_cast<std::size_t>(cfg.toy.states) *
        (cfg.group_size + cfg.parents_per_group * cfg.revisions_per_parent);
    CHECK(rollout.batch.sequences.size() == expected);

    for (const ToySequence& seq : rollout.batch.sequences) {
        CHECK(seq.tokens.size() == static_cast<std::size_t>(cfg.toy.length));
        CHECK(seq.reward >= 0.0);
        CHECK(seq.reward <= 1.0);
        if (seq.stage == ToyStage::Draft) {
            CHECK(seq.state == seq.sample);
        } else {
            CHECK(seq.state == cfg.toy.states + seq.sample);
        }
    }

    // A policy too small for the task is rejected.
    const ToyPolicy tiny = ToyPolicy::zeros(2, cfg.toy.vocab);
    Rng s2(1);
    Rng p2(2);
    CHECK_THROWS_AS(toy_rollout(tiny, cfg, s2, p2), ShapeMismatch);
}

TEST_CASE("toy training learns the token-matching task") {
    EngineConfig cfg;
    cfg.toy.iterations = 300;
    const ToyTrainResult result = toy_train(cfg, 0);
    REQUIRE(result.trace.size() == static_cast<std::size_t>(cfg.toy.iterations) + 1);
    CHECK(result.trace.back().mean_draft_reward > result.trace.front().mean_draft_reward);
}

TEST_CASE("a zero learning rate freezes the policy and reruns are identical") {
    EngineConfig cfg;
    cfg.toy.iterations = 20;
    cfg.toy.learning_rate = 0.0;
    const ToyTrainResult result = toy_train(cfg, 3);

    // The rollout streams differ per iteration, but with no updates the
    // final policy must still be the untouched initialization.
    Rng init(derive_seed(3, "toy-init"));
    const ToyPolicy fresh = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init, 0.1);
    REQUIRE(result.policy.logits.size() == fresh.logits.size());
    for (std::size_t i = 0; i < fresh.logits.size(); ++i) {
        CHECK(result.policy.logits[i] == fresh.logits[i]);
    }

    const ToyTrainResult again = toy_train(cfg, 3);
    REQUIRE(again.trace.size() == result.trace.size());
    for (std::size_t i = 0; i < result.trace.size(); ++i) {
        CHECK(again.trace[i].mean_draft_reward == result.trace[i].mean_draft_reward);
        CHECK(again.trace[i].loss == result.trace[i].loss);
    }
}

TEST_CASE("revise-only training still improves drafting when the stages share rows") {
    EngineConfig cfg;
    cfg.lambda = 1.0;
    cfg.toy.shared_revision_state = true;
    cfg.toy.iterations = 300;
    const ToyTrainResult result = toy_train(cfg, 1);
    CHECK(result.trace.back().mean_draft_reward > result.trace.front().mean_draft_reward);
}

TEST_CASE("trace csv lands on disk with one row per iteration") {
    testutil::TempDir dir;
    EngineConfig cfg;
    cfg.toy.iterations = 4;
    const ToyTrainResult result = toy_train(cfg, 0);
    const std::string path = dir.file("trace.csv");
    write_trace_csv(result.trace, path);

    const std::string text = testutil::read_file(path);
    CHECK(text.find("iteration,mean_draft_reward,mean_revise_reward,loss") == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 6);  // header + 5 rows
}
