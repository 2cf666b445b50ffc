#pragma once

// The draft-critique-revise inference pipeline, the two RL batch
// generators the mutual-refinement loop feeds to external trainers, and
// the stage scheduler that orders them. The engine never updates weights;
// it produces reward-annotated rollout files and expects retrained
// services to be redeployed between stages.

#include <cstdint>
#include <functional>
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
// endpoints
// ============================================================================

// Live service handles for the two trainable agents plus the optional
// synthesis teacher.
struct AgentEndpoints {
    BackendPtr proposal;
    BackendPtr critic;
    BackendPtr teacher;  // may be null outside synthesis

    // Instantiates whatever cfg configures; proposal and critic are
    // mandatory (MissingEndpoint), teacher stays null when unset.
    static AgentEndpoints from_config(const EngineConfig& cfg);
};

// ============================================================================
// draft-critique-revise records
// ============================================================================

struct DcrRound {
    Critique critique;
    ReasoningOutput revision;
};

struct DcrRecord {
    std::string sample_id;
    std::optional<Label> gold;  // carried through so result files are scoreable
    ReasoningOutput draft;
    std::vector<DcrRound> rounds;
    Prediction final_prediction;  // last revision's, or the draft's with no rounds
    std::string failure;          // why the loop stopped early, empty otherwise
};

nlohmann::ordered_json dcr_to_json(const DcrRecord& record);
void write_dcr_records(const std::vector<DcrRecord>& records, const std::string& path);

// ============================================================================
// inference operations
// ============================================================================

// One proposal call on the configured draft template, evaluation
// temperature, parsed leniently (format failures surface as format_ok).
ReasoningOutput draft(const Sample& sample, const AgentEndpoints& endpoints,
                      const EngineConfig& cfg, const PromptLibrary& prompts);

// One critic call over the reasoning under review (the draft, or in later
// rounds the previous revision).
Critique critique(const Sample& sample, const ReasoningOutput& reviewed,
                  const AgentEndpoints& endpoints, const EngineConfig& cfg,
                  const PromptLibrary& prompts);

// One proposal call that re-answers from scratch under the feedback,
// conditioned on the exchange that produced `reviewed`. Throws
// EmptyFeedback when feedback trims to nothing.
ReasoningOutput revise(const Sample& sample, const ReasoningOutput& reviewed,
                       const std::string& feedback, const AgentEndpoints& endpoints,
                       const EngineConfig& cfg, const PromptLibrary& prompts);

// Draft once, then `rounds` critique-revise cycles, each critiquing the
// newest output. A backend failure or empty feedback mid-loop records the
// failure and returns what succeeded so far. Throws ValidationError when
// rounds is negative or above cfg.max_rounds.
DcrRecord run_dcr(const Sample& sample, const AgentEndpoints& endpoints, int rounds,
                  const EngineConfig& cfg, const PromptLibrary& prompts);

// ============================================================================
// RL batch generation
// ============================================================================

struct BatchStats {
    std::size_t samples_in = 0;
    std::size_t samples_emitted = 0;
    std::size_t samples_skipped = 0;
    std::vector<std::string> skip_log;  // "sample_id: reason"
};

struct ProposalBatchResult {
    std::vector<RolloutGroup> groups;  // one per emitted sample, input order
    BatchStats stats;
};

// Proposal-stage rollouts against a frozen critic: G drafts per sample,
// one critique each, draft advantages over the group, K parents, M
// revisions per parent with advantages inside each parent's set. Lines go
// to out_file as they complete; a backend failure skips that sample, and
// more than 10% skips fails the whole run.
ProposalBatchResult generate_proposal_rl_batch(const std::vector<Sample>& samples,
                                               const AgentEndpoints& endpoints,
                                               const EngineConfig& cfg,
                                               const PromptLibrary& prompts,
                                               const std::string& out_file);

// Critic-stage rollouts against a frozen proposal: one draft per sample
// (from preset_drafts when it has the id, otherwise generated), G critic
// completions, one probe revision per critique (skipped without a backend
// call when the feedback is empty), critic advantages over the group.
BatchStats generate_critic_rl_batch(
    const std::vector<Sample>& samples, const AgentEndpoints& endpoints, const EngineConfig& cfg,
    const PromptLibrary& prompts, const std::string& out_file,
    const std::map<std::string, std::string>* preset_drafts = nullptr);

// ============================================================================
// mutual-refinement schedule
// ============================================================================

struct StagePlan {
    enum class Kind : std::uint8_t { CriticRL, ProposalRL };

    Kind kind = Kind::CriticRL;
    std::string frozen;      // which agent stays fixed during the stage
    int instances = 0;       // samples the stage consumes
    std::string batch_file;  // file name the stage writes
};

struct SchedulePlan {
    std::vector<StagePlan> stages;
};

std::string render_stage_kind(StagePlan::Kind kind);
StagePlan::Kind parse_stage_kind(const std::string& name);  // throws ConfigError

// Critic stage first, then proposal, repeated cfg.cycles times, with the
// per-stage instance counts from the config. Throws MissingEndpoint when
// either agent backend is unconfigured.
SchedulePlan mutual_refinement_schedule(const EngineConfig& cfg);

nlohmann::ordered_json plan_to_json(const SchedulePlan& plan);
SchedulePlan plan_from_json(const nlohmann::json& doc);  // throws ConfigError

struct ScheduleRunResult {
    std::vector<BatchStats> stage_stats;
    std::vector<std::string> batch_files;  // paths actually written
};

// Runs the plan's generators in order, each stage consuming the first
// stage.instances samples (all of them when fewer). Before every stage
// after the first, `ready` is consulted so an operator or readiness probe
// can gate on the retrained service being live; a false return raises
// BackendError. A null probe never blocks.
ScheduleRunResult run_schedule(const SchedulePlan& plan, const std::vector<Sample>& samples,
                               const AgentEndpoints& endpoints, const EngineConfig& cfg,
                               const PromptLibrary& prompts, const std::string& out_dir,
                               const std::function<bool(const StagePlan&)>& ready = {});

}  // namespace procrit
