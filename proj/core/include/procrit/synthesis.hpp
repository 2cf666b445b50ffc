#pragma once

// Reasoning-trajectory synthesis: the multi-turn dynamic-role rollout, the
// correctness filter that flattens good trajectories into single-turn
// training sequences, and the critic-guided construction of
// draft-feedback-revision triples from flawed ones.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "procrit/backend.hpp"
#include "procrit/config.hpp"
#include "procrit/prompts.hpp"
#include "procrit/types.hpp"

namespace procrit {

// ============================================================================
// records
// ============================================================================

struct SynthesisRecord {
    enum class Outcome : std::uint8_t { CorrectFlattened, FlawedTriple, Discarded };

    std::string sample_id;
    std::optional<Trajectory> trajectory;  // absent when the rollout itself failed
    Outcome outcome = Outcome::Discarded;

    std::string sequence;  // CorrectFlattened: the flattened training sequence

    std::string draft;     // FlawedTriple: flattened flawed draft
    std::string feedback;  // FlawedTriple: critic feedback
    std::string revision;  // FlawedTriple: corrected completion

    std::string reason;  // Discarded: "invalid_answer", "uncorrected", "parse_failure"
};

// ============================================================================
// rollout
// ============================================================================

// Runs one dynamic-role rollout conversation: system prompt, the sample's
// image and question, then one JSON role step per turn until the teacher
// declares a final answer. A final answer before min_steps is kept but
// coerced to continue; hitting max_steps without one triggers a single
// forced-final turn, so the result has between min_steps and max_steps+1
// steps. Each turn is re-sampled up to cfg.parse_retries times when its
// completion fails the step grammar; running out raises StepParseFailure.
Trajectory run_rollout(const Sample& sample, Backend& teacher, const EngineConfig& cfg,
                       const PromptLibrary& prompts);

// Resolves the final step's content into a yes/no prediction: standalone
// word-boundary "yes"/"no" scan; when neither or both occur, one
// clarification turn is appended to the conversation and its completion is
// scanned the same way; still ambiguous lands Invalid. Total.
Prediction extract_final_answer(const RoleStep& final_step, Backend& teacher,
                                const EngineConfig& cfg,
                                std::vector<ChatMessage>& conversation);

// The user turn that opens a rollout (image plus the sarcasm question).
ChatMessage rollout_question(const Sample& sample);

// ============================================================================
// filtering and triple construction
// ============================================================================

struct FilterDecision {
    enum class Action : std::uint8_t { Emit, StageForRevision };

    Action action = Action::Emit;
    SynthesisRecord record;   // Emit: CorrectFlattened or Discarded("invalid_answer")
    std::string flawed_flat;  // StageForRevision: flattened wrong-but-valid draft
};

// Gold-correct trajectories flatten into training sequences; valid but
// wrong ones are staged for build_revision_triple; Invalid answers are
// discarded. Requires a gold label on the sample.
FilterDecision filter_and_flatten(const Sample& sample, const Trajectory& traj);

// Asks the critic (once) for feedback on the flawed draft, then asks the
// teacher for a from-scratch revision under that feedback, accepting the
// first candidate that is well-formed and lands on gold. 1 + retries
// teacher attempts; exhaustion yields Discarded("uncorrected").
SynthesisRecord build_revision_triple(const Sample& sample, const Trajectory& traj,
                                      const std::string& flawed_flat, Backend& critic,
                                      Backend& teacher, int retries, const EngineConfig& cfg,
                                      const PromptLibrary& prompts);

// ============================================================================
// corpus driver
// ============================================================================

struct SynthesisStats {
    std::size_t total = 0;
    std::size_t drafts = 0;
    std::size_t triples = 0;
    std::size_t discards = 0;
    // Step counts of emitted records, split by gold label.
    std::map<std::size_t, std::size_t> histogram_sarcastic;
    std::map<std::size_t, std::size_t> histogram_non_sarcastic;
    std::map<std::string, std::size_t> discard_reasons;

    double average_steps_sarcastic() const;
    double average_steps_non_sarcastic() const;
    double average_steps_all() const;
};

// Rolls out every sample and writes drafts.jsonl, triples.jsonl,
// discards.jsonl, and stats.json under out_dir. Discarded records never
// reach the two training files. Backend failures for one sample discard
// that sample ("backend_error") and the run continues.
SynthesisStats run_synthesis(const std::vector<Sample>& samples, Backend& teacher,
                             Backend& critic, const EngineConfig& cfg,
                             const PromptLibrary& prompts, const std::string& out_dir);

nlohmann::ordered_json stats_to_json(const SynthesisStats& stats);

}  // namespace procrit
