// Release gate: ten end-to-end checks over the reward tables, the
// advantage and objective math, the toy trainer, evaluation, parsing,
// batch generation, the rollout protocol, and the HTTP wire contract.
// Each check prints one PASS/FAIL line; the exit status is nonzero when
// any check fails, so CTest treats a single red line as a failed gate.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "procrit/backend.hpp"
#include "procrit/config.hpp"
#include "procrit/grpo.hpp"
#include "procrit/metrics.hpp"
#include "procrit/parsing.hpp"
#include "procrit/pipeline.hpp"
#include "procrit/prompts.hpp"
#include "procrit/rewards.hpp"
#include "procrit/rng.hpp"
#include "procrit/synthesis.hpp"
#include "procrit/types.hpp"
#include "test_helpers.hpp"

namespace {

using namespace procrit;

// Tolerances and budgets, pinned in one place.
constexpr double kHandValueTol = 1e-12;   // closed-form objective and advantage values
constexpr double kMeanTol = 1e-9;         // zero-mean property of advantage groups
constexpr double kGradTol = 1e-5;         // analytic vs finite-difference gradient
constexpr double kPercentTol = 0.1;       // one-decimal percentage figures
constexpr double kMinTrainGain = 0.5;     // required mean-draft-reward improvement
constexpr int kMinTrainWins = 4;          // seeds (of 5) that must reach the gain
constexpr double kGradBudgetSeconds = 10.0;
constexpr double kTrainBudgetSeconds = 60.0;
constexpr double kHttpBudgetSeconds = 5.0;

void require(bool cond, const std::string& what) {
    if (!cond) throw std::runtime_error(what);
}

std::string fmt(double value) {
    std::ostringstream out;
    out.precision(17);
    out << value;
    return out.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ============================================================================
// 1. reward case tables
// ============================================================================

// Predictions encoded as 'y', 'n', 'i' so the expected values below are
// stated without touching the library's own comparison helpers.
Prediction decode_pred(char code) {
    switch (code) {
        case 'y': return Prediction::make_valid(Label::Sarcastic, "yes");
        case 'n': return Prediction::make_valid(Label::NotSarcastic, "no");
        default: return Prediction::invalid("maybe so");
    }
}

bool oracle_correct(char code, Label gold) {
    return (code == 'y' && gold == Label::Sarcastic) ||
           (code == 'n' && gold == Label::NotSarcastic);
}

void check_reward_tables() {
    const char codes[] = {'y', 'n', 'i'};
    const Label golds[] = {Label::Sarcastic, Label::NotSarcastic};

    for (Label gold : golds) {
        for (char d : codes) {
            for (char r : codes) {
                // Fix beats everything; otherwise any change that does not
                // land on gold is damage (an Invalid is never "the same").
                const bool changed = d == 'i' || r == 'i' || d != r;
                int expected = 0;
                if (!oracle_correct(d, gold) && oracle_correct(r, gold)) {
                    expected = 1;
                } else if (changed && !oracle_correct(r, gold)) {
                    expected = -1;
                }
                const Prediction draft = decode_pred(d);
                const Prediction revise = decode_pred(r);
                const int imp = improvement_reward(draft, revise, gold);
                const int act = actionability_reward(draft, revise, gold);
                const std::string key = std::string("d=") + d + " r=" + r +
                                        " gold=" + render_label(gold);
                require(imp == expected, "improvement mismatch at " + key + ": got " +
                                             std::to_string(imp) + " want " +
                                             std::to_string(expected));
                require(act == imp, "actionability diverged from improvement at " + key);
            }
        }
    }

    for (Label gold : golds) {
        for (char p : codes) {
            const Prediction pred = decode_pred(p);
            for (int s = 0; s <= 2; ++s) {
                const int expected = oracle_correct(p, gold) ? s - 1 : 1 - s;
                const int got = score_alignment_reward(CriticScore::make_valid(s), pred, gold);
                require(got == expected, "alignment mismatch at s=" + std::to_string(s) +
                                             " p=" + std::string(1, p) + ": got " +
                                             std::to_string(got));
            }
            require(score_alignment_reward(CriticScore::invalid(), pred, gold) == -1,
                    "an Invalid score must earn -1");
        }
    }

    require(eval_reward(CriticScore::make_valid(2)) == 1.0, "eval(2) != 1.0");
    require(eval_reward(CriticScore::make_valid(1)) == 0.5, "eval(1) != 0.5");
    require(eval_reward(CriticScore::make_valid(0)) == 0.0, "eval(0) != 0.0");
    require(eval_reward(CriticScore::invalid()) == 0.0, "eval(Invalid) != 0.0");

    const Critique crit{"check the cue", CriticScore::make_valid(0), true, "raw"};
    const RewardBreakdown unprobed =
        critic_reward_unprobed(crit, decode_pred('y'), Label::NotSarcastic);
    require(unprobed.component("act") == 0.0, "unprobed critic reward must pin act to 0");
}

// ============================================================================
// 2. group advantages
// ============================================================================

void check_group_advantages() {
    std::mt19937_64 gen(2026);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t size = 2 + gen() % 63;
        std::vector<double> rewards(size);
        std::vector<double> shifted(size);
        // Half-integer rewards and shifts are exact doubles, so the shift
        // must not move a single output bit.
        const double shift = (static_cast<int>(gen() % 9) - 4) * 0.5;
        for (std::size_t i = 0; i < size; ++i) {
            rewards[i] = (static_cast<int>(gen() % 13) - 6) * 0.5;
            shifted[i] = rewards[i] + shift;
        }

        const AdvantageSet base = group_advantages(rewards, 1e-4);
        double sum = 0.0;
        for (double v : base.values()) sum += v;
        require(std::fabs(sum / static_cast<double>(size)) <= kMeanTol,
                "trial " + std::to_string(trial) + ": advantage mean " + fmt(sum / size));

        const AdvantageSet moved = group_advantages(shifted, 1e-4);
        for (std::size_t i = 0; i < size; ++i) {
            require(moved.values()[i] == base.values()[i],
                    "trial " + std::to_string(trial) + ": shift by " + fmt(shift) +
                        " changed advantage " + std::to_string(i));
        }
    }

    const AdvantageSet flat = group_advantages({2.0, 2.0, 2.0}, 1e-4);
    for (double v : flat.values()) {
        require(v == 0.0, "constant group must yield exact zeros, got " + fmt(v));
    }

    const AdvantageSet hand = group_advantages({1.0, 2.0, 3.0}, 0.0);
    const double root = 1.2247448713915890;  // (3-2)/sqrt(2/3)
    require(std::fabs(hand.values()[0] + root) <= kHandValueTol &&
                std::fabs(hand.values()[1]) <= kHandValueTol &&
                std::fabs(hand.values()[2] - root) <= kHandValueTol,
            "hand advantages for {1,2,3} drifted: " + fmt(hand.values()[0]) + ", " +
                fmt(hand.values()[1]) + ", " + fmt(hand.values()[2]));
}

// ============================================================================
// 3. clipped surrogate
// ============================================================================

TokenSequence ratio_sequence(double log_ratio, std::size_t tokens = 3) {
    TokenSequence seq;
    seq.old_logps.assign(tokens, -0.5);
    for (std::size_t i = 0; i < tokens; ++i) seq.new_logps.push_back(-0.5 + log_ratio);
    return seq;
}

void check_clipped_surrogate() {
    const double on_policy = clipped_surrogate(ratio_sequence(0.0), 1.0, 0.2, 0.0);
    require(std::fabs(on_policy + 1.0) <= kHandValueTol,
            "ratio 1, advantage 1: want loss -1, got " + fmt(on_policy));

    const double clipped_up = clipped_surrogate(ratio_sequence(std::log(1.5)), 1.0, 0.2, 0.0);
    require(std::fabs(clipped_up + 1.2) <= kHandValueTol,
            "ratio 1.5 clips to 1.2: want loss -1.2, got " + fmt(clipped_up));

    const double unclipped_down = clipped_surrogate(ratio_sequence(std::log(0.5)), -1.0, 0.2, 0.0);
    require(std::fabs(unclipped_down - 0.8) <= kHandValueTol,
            "ratio 0.5, advantage -1: want loss +0.8, got " + fmt(unclipped_down));

    // Inside the trust band the clip must be a no-op, bit for bit.
    const TokenSequence in_band = ratio_sequence(std::log(1.1));
    require(clipped_surrogate(in_band, 0.7, 0.2, 0.0) ==
                clipped_surrogate(in_band, 0.7, 0.9, 0.0),
            "clip changed an in-band ratio");

    // At reference == new the KL estimator is exactly zero, so the beta
    // weight cannot matter.
    TokenSequence at_ref;
    at_ref.old_logps = {-1.0, -1.0};
    at_ref.new_logps = {-0.25, -0.75};
    at_ref.ref_logps = at_ref.new_logps;
    require(clipped_surrogate(at_ref, 0.3, 0.2, 0.5) ==
                clipped_surrogate(at_ref, 0.3, 0.2, 0.0),
            "KL term nonzero at the reference policy");
}

// ============================================================================
// 4. toy gradient vs finite differences
// ============================================================================

void check_toy_gradient() {
    const auto start = std::chrono::steady_clock::now();
    const EngineConfig cfg;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng init(derive_seed(seed, "toy-init"));
        const ToyPolicy policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init, 0.1);
        Rng sample_rng(derive_seed(seed, "toy-sample", 0));
        Rng parent_rng(derive_seed(seed, "toy-parents", 0));
        const ToyRollout rollout = toy_rollout(policy, cfg, sample_rng, parent_rng);

        const std::vector<double> analytic = toy_dual_stage_grad(policy, rollout.batch, cfg);
        const std::vector<double> fd = toy_fd_grad(policy, rollout.batch, cfg);
        require(analytic.size() == fd.size(), "gradient shape mismatch");
        const double err = max_relative_error(analytic, fd);
        require(err < kGradTol,
                "seed " + std::to_string(seed) + ": gradient error " + fmt(err));
    }
    const double elapsed = seconds_since(start);
    require(elapsed < kGradBudgetSeconds,
            "gradient check took " + fmt(elapsed) + "s (budget " + fmt(kGradBudgetSeconds) + "s)");
}

// ============================================================================
// 5. toy training improves
// ============================================================================

void check_toy_training() {
    const auto start = std::chrono::steady_clock::now();
    const EngineConfig cfg;
    int wins = 0;
    std::string gains;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ToyTrainResult result = toy_train(cfg, seed);
        require(result.trace.size() == static_cast<std::size_t>(cfg.toy.iterations) + 1,
                "trace row count off");
        const double gain =
            result.trace.back().mean_draft_reward - result.trace.front().mean_draft_reward;
        if (gain >= kMinTrainGain) ++wins;
        gains += (gains.empty() ? "" : ", ") + fmt(gain);
    }
    require(wins >= kMinTrainWins, "only " + std::to_string(wins) + " of 5 seeds gained " +
                                       fmt(kMinTrainGain) + " (gains: " + gains + ")");
    const double elapsed = seconds_since(start);
    require(elapsed < kTrainBudgetSeconds,
            "training took " + fmt(elapsed) + "s (budget " + fmt(kTrainBudgetSeconds) + "s)");
}

// ============================================================================
// 6. evaluation report figures
// ============================================================================

Prediction yes_no_pred(bool yes) {
    return yes ? Prediction::make_valid(Label::Sarcastic, "yes")
               : Prediction::make_valid(Label::NotSarcastic, "no");
}

void require_counts(const Confusion& c, std::int64_t tp, std::int64_t fp, std::int64_t fn,
                    std::int64_t tn, const std::string& what) {
    require(c.tp == tp && c.fp == fp && c.fn == fn && c.tn == tn,
            what + ": counts " + std::to_string(c.tp) + "/" + std::to_string(c.fp) + "/" +
                std::to_string(c.fn) + "/" + std::to_string(c.tn));
}

void require_percents(const Prf1& m, double f1, double acc, double p, double r,
                      const std::string& what) {
    const double got_f1 = percent_one_decimal(m.f1);
    const double got_acc = percent_one_decimal(m.accuracy);
    const double got_p = percent_one_decimal(m.precision);
    const double got_r = percent_one_decimal(m.recall);
    require(std::fabs(got_f1 - f1) <= kPercentTol && std::fabs(got_acc - acc) <= kPercentTol &&
                std::fabs(got_p - p) <= kPercentTol && std::fabs(got_r - r) <= kPercentTol,
            what + ": got F1 " + fmt(got_f1) + " Acc " + fmt(got_acc) + " P " + fmt(got_p) +
                " R " + fmt(got_r));
}

void check_eval_report() {
    testutil::TempDir dir;
    std::vector<DcrRecord> records;
    records.reserve(2409);

    const auto add = [&records](const std::string& id, Label gold, bool draft_yes,
                                bool final_yes) {
        DcrRecord rec;
        rec.sample_id = id;
        rec.gold = gold;
        rec.draft = ReasoningOutput{"draft reasoning", yes_no_pred(draft_yes), true, "draft raw"};
        DcrRound round;
        round.critique = Critique{"weigh the cue again", CriticScore::make_valid(1), true, "raw"};
        round.revision =
            ReasoningOutput{"revised reasoning", yes_no_pred(final_yes), true, "revision raw"};
        rec.rounds.push_back(std::move(round));
        rec.final_prediction = yes_no_pred(final_yes);
        records.push_back(std::move(rec));
    };

    // Two confusion matrices laid out directly as prediction streams:
    // draft {tp 906, fp 291, fn 131, tn 1081}, final {tp 949, fp 298,
    // fn 88, tn 1074} over 1037 positive and 1372 negative records.
    for (int i = 0; i < 1037; ++i) {
        add("y" + std::to_string(i), Label::Sarcastic, i < 906, i < 949);
    }
    for (int i = 0; i < 1372; ++i) {
        add("n" + std::to_string(i), Label::NotSarcastic, i < 291, i < 298);
    }

    const std::string path = dir.file("results.jsonl");
    write_dcr_records(records, path);
    const EvalReport report = evaluate_run(path, RoundSelector::final());

    require(report.rows.size() == 3, "expected Draft, Revise 1, Final rows");
    require(report.rows.front().name == "Draft" && report.rows.back().name == "Final",
            "row names off");
    require(report.primary == 2, "final selector should pick the last row");

    require_counts(report.rows.front().counts, 906, 291, 131, 1081, "draft row");
    require_counts(report.rows.back().counts, 949, 298, 88, 1074, "final row");
    require_percents(report.rows.front().metrics, 81.1, 82.5, 75.7, 87.4, "draft row");
    require_percents(report.rows.back().metrics, 83.1, 84.0, 76.1, 91.5, "final row");

    // The same figures straight from the counts, bypassing the file path.
    require_percents(prf1(Confusion{906, 291, 131, 1081}), 81.1, 82.5, 75.7, 87.4, "draft counts");
    require_percents(prf1(Confusion{949, 298, 88, 1074}), 83.1, 84.0, 76.1, 91.5, "final counts");
}

// ============================================================================
// 7. flatten/parse round-trip and totality
// ============================================================================

void check_parsing_roundtrip() {
    std::mt19937_64 gen(14);
    const std::string letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
    const std::string alphabet = letters + "0123456789 .,!?()";

    const auto rand_text = [&](std::size_t min_len, std::size_t max_len) {
        std::string out(1, letters[gen() % letters.size()]);
        const std::size_t len = min_len + gen() % (max_len - min_len + 1);
        while (out.size() < len) out += alphabet[gen() % alphabet.size()];
        return out;
    };

    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t length = 2 + gen() % 5;
        std::vector<RoleStep> steps;
        for (std::size_t i = 0; i < length; ++i) {
            steps.push_back(RoleStep{rand_text(3, 12), rand_text(1, 80),
                                     i + 1 == length ? NextAction::FinalAnswer
                                                     : NextAction::Continue});
        }
        const Label gold = gen() % 2 == 0 ? Label::Sarcastic : Label::NotSarcastic;
        const Trajectory traj =
            Trajectory::create("t" + std::to_string(trial), std::move(steps),
                               Prediction::make_valid(gold, render_label(gold)), length + 1);

        const ReasoningOutput parsed = parse_reasoning(flatten_trajectory(traj));
        require(parsed.format_ok, "trial " + std::to_string(trial) + ": flattened form failed");
        require(parsed.prediction.label.has_value() && *parsed.prediction.label == gold,
                "trial " + std::to_string(trial) + ": answer did not survive the round-trip");
        for (const RoleStep& step : traj.steps()) {
            require(parsed.think_text.find(step.title) != std::string::npos &&
                        parsed.think_text.find(step.content) != std::string::npos,
                    "trial " + std::to_string(trial) + ": a step text went missing");
        }
    }

    std::mt19937_64 noise(15);
    for (int trial = 0; trial < 10000; ++trial) {
        std::string raw(noise() % 201, '\0');
        for (char& c : raw) c = static_cast<char>(noise() % 256);
        try {
            extract_json_object(raw);
            parse_reasoning(raw);
            parse_critique(raw);
        } catch (const std::exception& err) {
            throw std::runtime_error("parser threw on random bytes: " + std::string(err.what()));
        }
    }
}

// ============================================================================
// 8. proposal batch determinism
// ============================================================================

void check_batch_determinism() {
    EngineConfig cfg;
    cfg.seed = 42;  // defaults elsewhere: G=8, K=2, M=4

    std::vector<Sample> samples;
    for (int i = 0; i < 20; ++i) {
        samples.push_back(testutil::make_sample(
            "s" + std::to_string(i), "curated post number " + std::to_string(i),
            i % 2 == 0 ? Label::Sarcastic : Label::NotSarcastic));
    }

    // One shared bank of replies so both runs feed byte-identical scripts.
    std::mt19937_64 gen(99);
    const auto coin = [&gen] { return gen() % 2 == 0 ? "yes" : "no"; };
    std::vector<std::string> proposal_replies;
    std::vector<std::string> critic_replies;
    for (const Sample& sample : samples) {
        for (int i = 0; i < cfg.group_size; ++i) {
            proposal_replies.push_back(testutil::reasoning_reply(
                "draft " + sample.id + " " + std::to_string(i), coin()));
        }
        for (int i = 0; i < cfg.group_size; ++i) {
            critic_replies.push_back(testutil::critique_reply(
                "feedback " + sample.id + " " + std::to_string(i),
                static_cast<int>(gen() % 3)));
        }
        for (int i = 0; i < cfg.parents_per_group * cfg.revisions_per_parent; ++i) {
            proposal_replies.push_back(testutil::reasoning_reply(
                "revision " + sample.id + " " + std::to_string(i), coin()));
        }
    }

    const PromptLibrary prompts;
    const auto run_once = [&](const std::string& out_file) {
        auto proposal = std::make_shared<ScriptedBackend>();
        auto critic = std::make_shared<ScriptedBackend>();
        for (const std::string& reply : proposal_replies) proposal->push_default(reply);
        for (const std::string& reply : critic_replies) critic->push_default(reply);
        AgentEndpoints endpoints;
        endpoints.proposal = proposal;
        endpoints.critic = critic;
        return generate_proposal_rl_batch(samples, endpoints, cfg, prompts, out_file);
    };

    testutil::TempDir dir;
    const ProposalBatchResult first = run_once(dir.file("batch_a.jsonl"));
    const ProposalBatchResult second = run_once(dir.file("batch_b.jsonl"));
    require(first.stats.samples_emitted == 20 && first.stats.samples_skipped == 0,
            "first run skipped samples");
    require(second.stats.samples_emitted == 20, "second run skipped samples");

    const std::string bytes_a = testutil::read_file(dir.file("batch_a.jsonl"));
    const std::string bytes_b = testutil::read_file(dir.file("batch_b.jsonl"));
    require(!bytes_a.empty(), "batch file came out empty");
    require(bytes_a == bytes_b, "reruns produced different bytes");

    std::map<std::string, std::pair<double, int>> draft_groups;
    std::map<std::string, std::pair<double, int>> revise_groups;
    std::ifstream in(dir.file("batch_a.jsonl"));
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        ++lines;
        const auto doc = nlohmann::json::parse(line);
        const std::string sample_id = doc.at("sample_id").get<std::string>();
        const double advantage = doc.at("advantage").get<double>();
        if (doc.at("group") == "draft") {
            auto& slot = draft_groups[sample_id];
            slot.first += advantage;
            slot.second += 1;
        } else {
            const auto parent = doc.at("parent_idx").get<int>();
            auto& slot = revise_groups[sample_id + "#" + std::to_string(parent)];
            slot.first += advantage;
            slot.second += 1;
        }
    }
    require(lines == 320, "expected 320 lines, got " + std::to_string(lines));
    require(draft_groups.size() == 20 && revise_groups.size() == 40, "group fan-out off");
    for (const auto& [key, slot] : draft_groups) {
        require(slot.second == 8, "draft group " + key + " has " + std::to_string(slot.second));
        require(std::fabs(slot.first / slot.second) <= kMeanTol,
                "draft group " + key + " advantage mean " + fmt(slot.first / slot.second));
    }
    for (const auto& [key, slot] : revise_groups) {
        require(slot.second == 4, "revise group " + key + " has " + std::to_string(slot.second));
        require(std::fabs(slot.first / slot.second) <= kMeanTol,
                "revise group " + key + " advantage mean " + fmt(slot.first / slot.second));
    }
}

// ============================================================================
// 9. rollout protocol under adversarial outputs
// ============================================================================

void check_rollout_protocol() {
    const EngineConfig cfg;  // max_steps 6, min_steps 2, parse_retries 2
    const PromptLibrary prompts;
    const Sample sample =
        testutil::make_sample("adv", "oh sure, what a great day", Label::Sarcastic);

    {
        // A final answer on the very first turn is kept but demoted.
        ScriptedBackend teacher;
        teacher.push_default(testutil::step_json("Judge", "jumping ahead", "final_answer"));
        teacher.push_default(testutil::step_json("Judge", "the answer is yes", "final_answer"));
        const Trajectory traj = run_rollout(sample, teacher, cfg, prompts);
        require(traj.length() == 2, "premature final: expected 2 steps");
        require(traj.steps()[0].next_action == NextAction::Continue,
                "premature final was not demoted");
        require(traj.steps()[1].next_action == NextAction::FinalAnswer, "missing final step");
        require(matches(traj.final_answer(), Label::Sarcastic), "premature final: wrong answer");
        require(teacher.calls() == 2, "premature final: unexpected call count");
    }

    {
        // A teacher that never volunteers an answer gets exactly one forced
        // final turn at the step cap.
        ScriptedBackend teacher;
        for (int i = 0; i < cfg.max_steps; ++i) {
            teacher.push_default(testutil::step_json(
                "Analyst", "still thinking " + std::to_string(i), "continue"));
        }
        teacher.push_default(
            testutil::step_json("Analyst", "after weighing everything, yes", "continue"));
        const Trajectory traj = run_rollout(sample, teacher, cfg, prompts);
        require(traj.length() == static_cast<std::size_t>(cfg.max_steps) + 1,
                "forced final: expected max_steps + 1 steps");
        require(traj.steps().back().next_action == NextAction::FinalAnswer,
                "forced final step must close the trajectory");
        require(teacher.request_text(cfg.max_steps).find("give the final answer now") !=
                    std::string::npos,
                "forced final prompt missing");
        require(matches(traj.final_answer(), Label::Sarcastic), "forced final: wrong answer");
    }

    {
        // Two malformed completions on one turn stay within the retry
        // budget and never leak into the conversation.
        ScriptedBackend teacher;
        teacher.push_default("complete garbage");
        teacher.push_default("also not a step {");
        teacher.push_default(testutil::step_json("Skeptic", "tone reads exaggerated", "continue"));
        teacher.push_default(testutil::step_json("Judge", "so the verdict is yes", "final_answer"));
        const Trajectory traj = run_rollout(sample, teacher, cfg, prompts);
        require(traj.length() == 2, "retry recovery: expected 2 steps");
        require(teacher.calls() == 4, "retry recovery: expected 4 calls");
        require(teacher.request_text(3).find("complete garbage") == std::string::npos,
                "failed attempt leaked into the conversation");
        require(matches(traj.final_answer(), Label::Sarcastic), "retry recovery: wrong answer");
    }
}

// ============================================================================
// 10. HTTP wire contract
// ============================================================================

void check_http_contract() {
    const auto start = std::chrono::steady_clock::now();

    httplib::Server server;
    std::mutex mu;
    std::vector<std::string> bodies;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions",
                [&](const httplib::Request& req, httplib::Response& res) {
                    const int attempt = hits++;
                    {
                        std::lock_guard<std::mutex> lock(mu);
                        bodies.push_back(req.body);
                    }
                    if (attempt < 2) {
                        res.status = 500;
                        res.set_content("busy", "text/plain");
                        return;
                    }
                    const auto doc = nlohmann::json::parse(req.body);
                    const int n = doc.value("n", 1);
                    nlohmann::json choices = nlohmann::json::array();
                    for (int i = 0; i < n; ++i) {
                        nlohmann::json choice;
                        choice["message"]["content"] = "<think>ok</think>\n<answer>yes</answer>";
                        choices.push_back(choice);
                    }
                    res.set_content(nlohmann::json{{"choices", choices}}.dump(),
                                    "application/json");
                });

    const int port = server.bind_to_any_port("127.0.0.1");
    require(port > 0, "stub server failed to bind");
    std::thread worker([&server] { server.listen_after_bind(); });
    server.wait_until_ready();

    try {
        BackendSpec spec = BackendSpec::http("http://127.0.0.1:" + std::to_string(port), "relay");
        spec.max_retries = 3;
        spec.backoff_initial_ms = 1;
        spec.backoff_cap_ms = 2;

        HttpBackend backend(spec, 2);
        DecodeParams params;
        params.temperature = 0.3;
        params.max_new_tokens = 64;
        params.n = 2;
        params.seed = 7;

        const std::string image_ref = "https://cdn.example/post.jpg";
        const std::vector<ChatMessage> messages = {
            ChatMessage::system("you judge sarcasm"),
            ChatMessage::user_with_image(image_ref, "oh great, rain again")};
        const std::vector<std::string> replies = backend.generate(messages, params);

        require(replies.size() == 2, "expected exactly n=2 completions");
        require(replies[0].find("<answer>yes</answer>") != std::string::npos,
                "completion content lost in transit");
        require(hits.load() == 3, "expected 2 retried failures + 1 success, saw " +
                                      std::to_string(hits.load()));
        require(hits.load() <= 1 + spec.max_retries, "attempt count exceeded 1 + max_retries");

        nlohmann::json body;
        {
            std::lock_guard<std::mutex> lock(mu);
            body = nlohmann::json::parse(bodies.back());
        }
        require(body.at("model") == "relay", "model name missing from request body");
        require(body.at("messages").is_array() && body.at("messages").size() == 2,
                "messages array malformed");
        require(body.at("messages")[0].at("role") == "system", "system turn lost");
        bool saw_image = false;
        bool saw_text = false;
        for (const auto& part : body.at("messages")[1].at("content")) {
            if (part.contains("image_url") && part.at("image_url").at("url") == image_ref) {
                saw_image = true;
            }
            if (part.value("type", "") == "text") saw_text = true;
        }
        require(saw_image && saw_text, "user turn lost its image or text part");
        require(body.at("temperature").get<double>() == 0.3, "temperature not forwarded");
        require(body.at("max_tokens").get<int>() == 64, "max_tokens not forwarded");
        require(body.at("n").get<int>() == 2, "n not forwarded");
        require(body.at("seed").get<std::uint64_t>() == 7, "seed not forwarded");
    } catch (...) {
        server.stop();
        worker.join();
        throw;
    }
    server.stop();
    worker.join();

    const double elapsed = seconds_since(start);
    require(elapsed < kHttpBudgetSeconds,
            "HTTP check took " + fmt(elapsed) + "s (budget " + fmt(kHttpBudgetSeconds) + "s)");
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void()>>> checks = {
        {"improvement, actionability, and alignment rewards match their case tables",
         check_reward_tables},
        {"group advantages: zero mean, exact shift invariance, pinned hand values",
         check_group_advantages},
        {"clipped surrogate hand values, in-band clip inactivity, zero KL at reference",
         check_clipped_surrogate},
        {"analytic toy gradient matches finite differences on 20 seeds", check_toy_gradient},
        {"toy training lifts mean draft reward on at least 4 of 5 seeds", check_toy_training},
        {"evaluation report reproduces the reference confusion figures", check_eval_report},
        {"flatten/parse round-trip holds and parsers are total on random bytes",
         check_parsing_roundtrip},
        {"proposal RL batches rerun byte-identically with zero-mean groups",
         check_batch_determinism},
        {"rollout protocol survives premature finals, stalling, and malformed steps",
         check_rollout_protocol},
        {"HTTP backend honors the chat-completions contract and retry budget",
         check_http_contract},
    };

    int failures = 0;
    for (std::size_t i = 0; i < checks.size(); ++i) {
        std::string detail;
        try {
            checks[i].second();
        } catch (const std::exception& err) {
            detail = err.what();
        } catch (...) {
            detail = "unknown error";
        }
        if (detail.empty()) {
            std::printf("[PASS] %2zu. %s\n", i + 1, checks[i].first.c_str());
        } else {
            ++failures;
            std::printf("[FAIL] %2zu. %s\n       %s\n", i + 1, checks[i].first.c_str(),
                        detail.c_str());
        }
    }
    std::printf("%zu of %zu acceptance checks passed\n", checks.size() - failures, checks.size());
    return failures == 0 ? 0 : 1;
}
