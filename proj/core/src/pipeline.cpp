#include "procrit/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <utility>

#include "procrit/errors.hpp"
#include "procrit/grpo.hpp"
#include "procrit/parsing.hpp"
#include "procrit/rewards.hpp"
#include "procrit/rng.hpp"

namespace procrit {

namespace {

DecodeParams decode_params(double temperature, int max_new_tokens, int n = 1,
                           std::optional<std::uint64_t> seed = std::nullopt) {
    DecodeParams params;
    params.temperature = temperature;
    params.max_new_tokens = max_new_tokens;
    params.n = n;
    params.seed = seed;
    return params;
}

std::string draft_prompt_text(const Sample& sample, const EngineConfig& cfg,
                              const PromptLibrary& prompts) {
    return render_prompt(prompts.get(PromptLibrary::draft_template_for(cfg.template_mode)),
                         sample);
}

std::vector<ChatMessage> draft_messages(const Sample& sample, const std::string& prompt_text) {
    return {ChatMessage{Role::User, build_user_parts(prompt_text, sample.image_ref)}};
}

std::vector<ChatMessage> critic_messages(const Sample& sample, const std::string& reasoning,
                                         const PromptLibrary& prompts) {
    const std::string prompt =
        render_prompt(prompts.get(TemplateId::Critic), sample, {{"reasoning", reasoning}});
    return {ChatMessage{Role::User, build_user_parts(prompt, sample.image_ref)}};
}

// The revision conversation replays the exchange that produced the text
// under revision, then asks for a from-scratch re-answer.
std::vector<ChatMessage> revise_messages(const Sample& sample, const std::string& draft_prompt,
                                         const std::string& reviewed_raw,
                                         const std::string& revise_prompt) {
    return {ChatMessage{Role::User, build_user_parts(draft_prompt, sample.image_ref)},
            ChatMessage::assistant(reviewed_raw), ChatMessage::user(revise_prompt)};
}

nlohmann::ordered_json reward_json(const RewardBreakdown& reward) {
    nlohmann::ordered_json out;
    for (const auto& [name, value] : reward.components()) out[name] = value;
    out["total"] = reward.total();
    return out;
}

}  // namespace

// ============================================================================
// endpoints
// ============================================================================

AgentEndpoints AgentEndpoints::from_config(const EngineConfig& cfg) {
    if (!backend_configured(cfg.proposal)) throw MissingEndpoint("proposal");
    if (!backend_configured(cfg.critic)) throw MissingEndpoint("critic");
    AgentEndpoints endpoints;
    endpoints.proposal = make_backend(cfg.proposal, cfg.workers);
    endpoints.critic = make_backend(cfg.critic, cfg.workers);
    if (backend_configured(cfg.teacher)) {
        endpoints.teacher = make_backend(cfg.teacher, cfg.workers);
    }
    return endpoints;
}

// ============================================================================
// draft-critique-revise records
// ============================================================================

nlohmann::ordered_json dcr_to_json(const DcrRecord& record) {
    nlohmann::ordered_json out;
    out["sample_id"] = record.sample_id;
    if (record.gold) {
        out["gold"] = render_label(*record.gold);
    } else {
        out["gold"] = nullptr;
    }
    nlohmann::ordered_json draft_obj;
    draft_obj["completion"] = record.draft.raw;
    draft_obj["pred"] = render_prediction(record.draft.prediction);
    out["draft"] = std::move(draft_obj);

    auto rounds = nlohmann::ordered_json::array();
    for (const DcrRound& round : record.rounds) {
        nlohmann::ordered_json row;
        row["feedback"] = round.critique.feedback;
        if (round.critique.score.valid()) {
            row["score"] = *round.critique.score.value;
        } else {
            row["score"] = nullptr;
        }
        row["completion"] = round.revision.raw;
        row["pred"] = render_prediction(round.revision.prediction);
        rounds.push_back(std::move(row));
    }
    out["rounds"] = std::move(rounds);
    out["final_pred"] = render_prediction(record.final_prediction);
    if (!record.failure.empty()) out["failure"] = record.failure;
    return out;
}

void write_dcr_records(const std::vector<DcrRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open results file " + path);
    for (const DcrRecord& record : records) {
        out << dcr_to_json(record).dump() << "\n";
    }
}

// ============================================================================
// inference operations
// ============================================================================

ReasoningOutput draft(const Sample& sample, const AgentEndpoints& endpoints,
                      const EngineConfig& cfg, const PromptLibrary& prompts) {
    const std::string prompt = draft_prompt_text(sample, cfg, prompts);
    const auto replies = endpoints.proposal->generate(
        draft_messages(sample, prompt), decode_params(cfg.eval_temperature, cfg.max_tokens));
    return parse_reasoning(replies.front());
}

Critique critique(const Sample& sample, const ReasoningOutput& reviewed,
                  const AgentEndpoints& endpoints, const EngineConfig& cfg,
                  const PromptLibrary& prompts) {
    if (reviewed.raw.empty()) {
        throw ValidationError("critique needs a non-empty reasoning text");
    }
    const auto replies = endpoints.critic->generate(
        critic_messages(sample, reviewed.raw, prompts),
        decode_params(cfg.eval_temperature, cfg.max_tokens_critic));
    return parse_critique(replies.front());
}

ReasoningOutput revise(const Sample& sample, const ReasoningOutput& reviewed,
                       const std::string& feedback, const AgentEndpoints& endpoints,
                       const EngineConfig& cfg, const PromptLibrary& prompts) {
    if (trim_copy(feedback).empty()) throw EmptyFeedback();
    const std::string prompt = draft_prompt_text(sample, cfg, prompts);
    const std::string revise_prompt =
        render_prompt(prompts.get(TemplateId::Revise), sample, {{"feedback", feedback}});
    const auto replies = endpoints.proposal->generate(
        revise_messages(sample, prompt, reviewed.raw, revise_prompt),
        decode_params(cfg.eval_temperature, cfg.max_tokens));
    return parse_reasoning(replies.front());
}

DcrRecord run_dcr(const Sample& sample, const AgentEndpoints& endpoints, int rounds,
                  const EngineConfig& cfg, const PromptLibrary& prompts) {
    if (rounds < 0 || rounds > cfg.max_rounds) {
        throw ValidationError("revision rounds must be in [0, " +
                              std::to_string(cfg.max_rounds) + "], got " +
                              std::to_string(rounds));
    }
    DcrRecord record;
    record.sample_id = sample.id;
    record.gold = sample.gold;
    record.draft = draft(sample, endpoints, cfg, prompts);
    record.final_prediction = record.draft.prediction;

    ReasoningOutput current = record.draft;
    for (int r = 1; r <= rounds; ++r) {
        try {
            Critique crit = critique(sample, current, endpoints, cfg, prompts);
            if (trim_copy(crit.feedback).empty()) {
                record.failure = "round " + std::to_string(r) + ": empty feedback";
                break;
            }
            ReasoningOutput revision =
                revise(sample, current, crit.feedback, endpoints, cfg, prompts);
            record.final_prediction = revision.prediction;
            current = revision;
            record.rounds.push_back(DcrRound{std::move(crit), std::move(revision)});
        } catch (const BackendError& err) {
            record.failure = "round " + std::to_string(r) + ": " + err.what();
            break;
        }
    }
    return record;
}

// ============================================================================
// RL batch generation
// ============================================================================

namespace {

void enforce_skip_budget(const BatchStats& stats) {
    // More than 10% skipped samples means the service or the data is
    // broken, not unlucky; fail the run instead of emitting a thin batch.
    if (stats.samples_skipped * 10 > stats.samples_in) {
        throw ValidationError("skipped " + std::to_string(stats.samples_skipped) + " of " +
                              std::to_string(stats.samples_in) + " samples");
    }
}

Label require_gold(const Sample& sample) {
    if (!sample.gold) {
        throw ValidationError("sample " + sample.id + " has no gold label");
    }
    return *sample.gold;
}

}  // namespace

ProposalBatchResult generate_proposal_rl_batch(const std::vector<Sample>& samples,
                                               const AgentEndpoints& endpoints,
                                               const EngineConfig& cfg,
                                               const PromptLibrary& prompts,
                                               const std::string& out_file) {
    std::ofstream out(out_file);
    if (!out) throw ValidationError("cannot open batch file " + out_file);

    ProposalBatchResult result;
    result.stats.samples_in = samples.size();
    const int g = cfg.group_size;
    const int k = cfg.parents_per_group;
    const int m = cfg.revisions_per_parent;

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& sample = samples[i];
        const Label gold = require_gold(sample);
        try {
            const std::string prompt = draft_prompt_text(sample, cfg, prompts);

            const auto completions = endpoints.proposal->generate(
                draft_messages(sample, prompt),
                decode_params(cfg.group_temperature, cfg.max_tokens, g,
                              derive_seed(cfg.seed, "proposal-drafts", i)));

            RolloutGroup group;
            group.sample_id = sample.id;
            std::vector<double> draft_totals;
            std::vector<bool> correct_flags;
            for (const std::string& completion : completions) {
                DraftRecord rec;
                rec.output = parse_reasoning(completion);
                rec.critique = parse_critique(
                    endpoints.critic
                        ->generate(critic_messages(sample, completion, prompts),
                                   decode_params(cfg.eval_temperature, cfg.max_tokens_critic))
                        .front());
                rec.reward = draft_reward(rec.output, rec.critique, gold, cfg.eval_divisor);
                draft_totals.push_back(rec.reward.total());
                correct_flags.push_back(matches(rec.output.prediction, gold));
                group.drafts.push_back(std::move(rec));
            }
            const AdvantageSet draft_adv = group_advantages(draft_totals, cfg.adv_epsilon);

            Rng parent_rng(derive_seed(cfg.seed, "select-parents", i));
            const auto parents = select_parents(correct_flags, k, parent_rng);

            std::vector<std::string> parent_prompts;
            std::vector<AdvantageSet> parent_advs;
            for (std::size_t slot = 0; slot < parents.size(); ++slot) {
                const std::size_t parent_idx = parents[slot];
                ParentRecord parent;
                parent.draft_index = parent_idx;
                parent.feedback = group.drafts[parent_idx].critique.feedback;

                const std::string revise_prompt = render_prompt(
                    prompts.get(TemplateId::Revise), sample, {{"feedback", parent.feedback}});
                const auto revisions = endpoints.proposal->generate(
                    revise_messages(sample, prompt, group.drafts[parent_idx].output.raw,
                                    revise_prompt),
                    decode_params(cfg.group_temperature, cfg.max_tokens, m,
                                  derive_seed(cfg.seed, "proposal-revisions",
                                              i * static_cast<std::size_t>(k) + slot)));

                std::vector<double> revise_totals;
                for (const std::string& completion : revisions) {
                    RevisionRecord rev;
                    rev.output = parse_reasoning(completion);
                    rev.reward = revise_reward(group.drafts[parent_idx].output.prediction,
                                               rev.output, gold);
                    revise_totals.push_back(rev.reward.total());
                    parent.revisions.push_back(std::move(rev));
                }
                parent_advs.push_back(group_advantages(revise_totals, cfg.adv_epsilon));
                parent_prompts.push_back(revise_prompt);
                group.parents.push_back(std::move(parent));
            }
            validate_rollout_group(group);

            for (std::size_t idx = 0; idx < group.drafts.size(); ++idx) {
                const DraftRecord& rec = group.drafts[idx];
                nlohmann::ordered_json line;
                line["sample_id"] = sample.id;
                line["group"] = "draft";
                line["idx"] = idx;
                line["prompt"] = prompt;
                line["completion"] = rec.output.raw;
                line["reward"] = reward_json(rec.reward);
                line["advantage"] = draft_adv.values()[idx];
                line["pred"] = render_prediction(rec.output.prediction);
                line["gold"] = render_label(gold);
                out << line.dump() << "\n";
            }
            for (std::size_t slot = 0; slot < group.parents.size(); ++slot) {
                const ParentRecord& parent = group.parents[slot];
                for (std::size_t idx = 0; idx < parent.revisions.size(); ++idx) {
                    const RevisionRecord& rev = parent.revisions[idx];
                    nlohmann::ordered_json line;
                    line["sample_id"] = sample.id;
                    line["group"] = "revise";
                    line["parent_idx"] = parent.draft_index;
                    line["idx"] = idx;
                    line["prompt"] = parent_prompts[slot];
                    line["completion"] = rev.output.raw;
                    line["reward"] = reward_json(rev.reward);
                    line["advantage"] = parent_advs[slot].values()[idx];
                    line["pred"] = render_prediction(rev.output.prediction);
                    line["gold"] = render_label(gold);
                    out << line.dump() << "\n";
                }
            }

            result.groups.push_back(std::move(group));
            ++result.stats.samples_emitted;
        } catch (const BackendError& err) {
            ++result.stats.samples_skipped;
            result.stats.skip_log.push_back(sample.id + ": " + err.what());
        }
    }
    enforce_skip_budget(result.stats);
    return result;
}

BatchStats generate_critic_rl_batch(const std::vector<Sample>& samples,
                                    const AgentEndpoints& endpoints, const EngineConfig& cfg,
                                    const PromptLibrary& prompts, const std::string& out_file,
                                    const std::map<std::string, std::string>* preset_drafts) {
    std::ofstream out(out_file);
    if (!out) throw ValidationError("cannot open batch file " + out_file);

    BatchStats stats;
    stats.samples_in = samples.size();
    const int g = cfg.group_size;

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& sample = samples[i];
        const Label gold = require_gold(sample);
        try {
            const std::string prompt = draft_prompt_text(sample, cfg, prompts);

            std::string draft_completion;
            bool preset = false;
            if (preset_drafts != nullptr) {
                const auto found = preset_drafts->find(sample.id);
                if (found != preset_drafts->end()) {
                    draft_completion = found->second;
                    preset = true;
                }
            }
            if (!preset) {
                draft_completion =
                    endpoints.proposal
                        ->generate(draft_messages(sample, prompt),
                                   decode_params(cfg.eval_temperature, cfg.max_tokens, 1,
                                                 derive_seed(cfg.seed, "critic-stage-draft", i)))
                        .front();
            }
            const ReasoningOutput draft_out = parse_reasoning(draft_completion);

            const std::string critic_prompt = render_prompt(
                prompts.get(TemplateId::Critic), sample, {{"reasoning", draft_completion}});
            const std::vector<ChatMessage> critic_msgs{
                ChatMessage{Role::User, build_user_parts(critic_prompt, sample.image_ref)}};
            const auto critiques = endpoints.critic->generate(
                critic_msgs, decode_params(cfg.group_temperature, cfg.max_tokens_critic, g,
                                           derive_seed(cfg.seed, "critic-group", i)));

            struct CriticRow {
                Critique critique;
                RewardBreakdown reward;
                std::optional<Prediction> probe_pred;
                std::string completion;
            };
            std::vector<CriticRow> rows;
            std::vector<double> totals;
            for (const std::string& raw : critiques) {
                CriticRow row;
                row.completion = raw;
                row.critique = parse_critique(raw);
                if (trim_copy(row.critique.feedback).empty()) {
                    // Nothing to act on: the probe is skipped outright and
                    // actionability contributes nothing either way.
                    row.reward = critic_reward_unprobed(row.critique, draft_out.prediction, gold);
                } else {
                    const std::string revise_prompt =
                        render_prompt(prompts.get(TemplateId::Revise), sample,
                                      {{"feedback", row.critique.feedback}});
                    const std::string probe =
                        endpoints.proposal
                            ->generate(revise_messages(sample, prompt, draft_completion,
                                                       revise_prompt),
                                       decode_params(cfg.eval_temperature, cfg.max_tokens))
                            .front();
                    row.probe_pred = parse_reasoning(probe).prediction;
                    row.reward = critic_reward(row.critique, draft_out.prediction,
                                               *row.probe_pred, gold);
                }
                totals.push_back(row.reward.total());
                rows.push_back(std::move(row));
            }
            const AdvantageSet adv = group_advantages(totals, cfg.adv_epsilon);

            for (std::size_t idx = 0; idx < rows.size(); ++idx) {
                const CriticRow& row = rows[idx];
                nlohmann::ordered_json line;
                line["sample_id"] = sample.id;
                line["group"] = "critic";
                line["idx"] = idx;
                line["prompt"] = critic_prompt;
                line["completion"] = row.completion;
                line["reward"] = reward_json(row.reward);
                line["advantage"] = adv.values()[idx];
                if (row.critique.score.valid()) {
                    line["score"] = *row.critique.score.value;
                } else {
                    line["score"] = nullptr;
                }
                if (row.probe_pred) {
                    line["probe_pred"] = render_prediction(*row.probe_pred);
                } else {
                    line["probe_pred"] = nullptr;
                }
                out << line.dump() << "\n";
            }
            ++stats.samples_emitted;
        } catch (const BackendError& err) {
            ++stats.samples_skipped;
            stats.skip_log.push_back(sample.id + ": " + err.what());
        }
    }
    enforce_skip_budget(stats);
    return stats;
}

// ============================================================================
// mutual-refinement schedule
// ============================================================================

std::string render_stage_kind(StagePlan::Kind kind) {
    return kind == StagePlan::Kind::CriticRL ? "critic_rl" : "proposal_rl";
}

StagePlan::Kind parse_stage_kind(const std::string& name) {
    if (name == "critic_rl") return StagePlan::Kind::CriticRL;
    if (name == "proposal_rl") return StagePlan::Kind::ProposalRL;
    throw ConfigError("unknown stage kind: " + name);
}

SchedulePlan mutual_refinement_schedule(const EngineConfig& cfg) {
    if (!backend_configured(cfg.proposal)) throw MissingEndpoint("proposal");
    if (!backend_configured(cfg.critic)) throw MissingEndpoint("critic");

    SchedulePlan plan;
    for (int cycle = 1; cycle <= cfg.cycles; ++cycle) {
        StagePlan critic_stage;
        critic_stage.kind = StagePlan::Kind::CriticRL;
        critic_stage.frozen = "proposal";
        critic_stage.instances = cfg.critic_instances;
        critic_stage.batch_file = "critic_batch_" + std::to_string(cycle) + ".jsonl";
        plan.stages.push_back(std::move(critic_stage));

        StagePlan proposal_stage;
        proposal_stage.kind = StagePlan::Kind::ProposalRL;
        proposal_stage.frozen = "critic";
        proposal_stage.instances = cfg.proposal_instances;
        proposal_stage.batch_file = "proposal_batch_" + std::to_string(cycle) + ".jsonl";
        plan.stages.push_back(std::move(proposal_stage));
    }
    return plan;
}

nlohmann::ordered_json plan_to_json(const SchedulePlan& plan) {
    auto stages = nlohmann::ordered_json::array();
    for (const StagePlan& stage : plan.stages) {
        nlohmann::ordered_json row;
        row["kind"] = render_stage_kind(stage.kind);
        row["frozen"] = stage.frozen;
        row["instances"] = stage.instances;
        row["batch_file"] = stage.batch_file;
        stages.push_back(std::move(row));
    }
    nlohmann::ordered_json out;
    out["stages"] = std::move(stages);
    return out;
}

SchedulePlan plan_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("stages") || !doc["stages"].is_array()) {
        throw ConfigError("plan document needs a \"stages\" array");
    }
    SchedulePlan plan;
    for (const auto& row : doc["stages"]) {
        if (!row.is_object() || !row.contains("kind") || !row["kind"].is_string() ||
            !row.contains("frozen") || !row["frozen"].is_string() || !row.contains("instances") ||
            !row["instances"].is_number_integer() || !row.contains("batch_file") ||
            !row["batch_file"].is_string()) {
            throw ConfigError("malformed stage entry in plan");
        }
        StagePlan stage;
        stage.kind = parse_stage_kind(row["kind"].get<std::string>());
        stage.frozen = row["frozen"].get<std::string>();
        stage.instances = row["instances"].get<int>();
        stage.batch_file = row["batch_file"].get<std::string>();
        plan.stages.push_back(std::move(stage));
    }
    return plan;
}

ScheduleRunResult run_schedule(const SchedulePlan& plan, const std::vector<Sample>& samples,
                               const AgentEndpoints& endpoints, const EngineConfig& cfg,
                               const PromptLibrary& prompts, const std::string& out_dir,
                               const std::function<bool(const StagePlan&)>& ready) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    ScheduleRunResult result;
    for (std::size_t s = 0; s < plan.stages.size(); ++s) {
        const StagePlan& stage = plan.stages[s];
        if (s > 0 && ready && !ready(stage)) {
            throw BackendError("service for stage " + std::to_string(s + 1) + " (" +
                               render_stage_kind(stage.kind) + ") is not ready");
        }
        const std::size_t take = std::min(
            samples.size(), static_cast<std::size_t>(std::max(stage.instances, 0)));
        const std::vector<Sample> slice(samples.begin(),
                                        samples.begin() + static_cast<std::ptrdiff_t>(take));
        const std::string path = (fs::path(out_dir) / stage.batch_file).string();

        BatchStats stats;
        if (stage.kind == StagePlan::Kind::CriticRL) {
            stats = generate_critic_rl_batch(slice, endpoints, cfg, prompts, path);
        } else {
            stats = generate_proposal_rl_batch(slice, endpoints, cfg, prompts, path).stats;
        }
        result.stage_stats.push_back(std::move(stats));
        result.batch_files.push_back(path);
    }
    return result;
}

}  // namespace procrit
