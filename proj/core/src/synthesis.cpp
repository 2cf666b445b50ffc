#include "procrit/synthesis.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <string_view>
#include <utility>

#include "procrit/errors.hpp"
#include "procrit/parsing.hpp"

namespace procrit {

namespace {

const char* const kForcedFinalTurn =
    "Stop adding roles and give the final answer now. Respond with one more JSON "
    "step whose next_action is \"final_answer\".";

const char* const kClarificationTurn = "Answer with exactly yes or no.";

bool word_char(unsigned char c) { return std::isalnum(c) != 0 || c == '_'; }

// Counts standalone occurrences of a lowercase word, case-insensitively.
std::size_t count_word(const std::string& text, std::string_view word) {
    std::size_t hits = 0;
    for (std::size_t i = 0; i + word.size() <= text.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < word.size(); ++j) {
            if (std::tolower(static_cast<unsigned char>(text[i + j])) != word[j]) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        if (i > 0 && word_char(static_cast<unsigned char>(text[i - 1]))) continue;
        const std::size_t end = i + word.size();
        if (end < text.size() && word_char(static_cast<unsigned char>(text[end]))) continue;
        ++hits;
    }
    return hits;
}

// A label when exactly one of "yes"/"no" appears as a standalone word.
std::optional<Label> scan_yes_no(const std::string& text) {
    const std::size_t yes = count_word(text, "yes");
    const std::size_t no = count_word(text, "no");
    if (yes > 0 && no == 0) return Label::Sarcastic;
    if (no > 0 && yes == 0) return Label::NotSarcastic;
    return std::nullopt;
}

DecodeParams turn_params(const EngineConfig& cfg, double temperature) {
    DecodeParams params;
    params.temperature = temperature;
    params.max_new_tokens = cfg.max_tokens;
    return params;
}

// One assistant turn that must parse as a role step. The turn is re-sampled
// on grammar failures; failed attempts never enter the conversation, so the
// model is not conditioned on its own rejects.
RoleStep sample_step(Backend& teacher, std::vector<ChatMessage>& conversation,
                     const DecodeParams& params, int retries) {
    std::string last_error;
    for (int attempt = 0; attempt <= retries; ++attempt) {
        const std::string raw = teacher.generate(conversation, params).front();
        try {
            RoleStep step = parse_role_step(raw);
            conversation.push_back(ChatMessage::assistant(raw));
            return step;
        } catch (const Error& err) {
            last_error = err.what();
        }
    }
    throw StepParseFailure("role step failed to parse after " + std::to_string(retries + 1) +
                           " attempts: " + last_error);
}

double histogram_mean(const std::map<std::size_t, std::size_t>& hist) {
    std::size_t count = 0;
    double weighted = 0.0;
    for (const auto& [steps, n] : hist) {
        count += n;
        weighted += static_cast<double>(steps) * static_cast<double>(n);
    }
    return count == 0 ? 0.0 : weighted / static_cast<double>(count);
}

}  // namespace

// ============================================================================
// rollout
// ============================================================================

ChatMessage rollout_question(const Sample& sample) {
    std::string body = "Text: " + sample.text + "\nQuestion: Is this post sarcastic?";
    if (sample.image_ref) {
        return ChatMessage::user_with_image(*sample.image_ref, std::move(body));
    }
    return ChatMessage::user(std::move(body));
}

Trajectory run_rollout(const Sample& sample, Backend& teacher, const EngineConfig& cfg,
                       const PromptLibrary& prompts) {
    std::vector<ChatMessage> conversation;
    conversation.push_back(ChatMessage::system(prompts.get(TemplateId::RolloutSystem).body));
    conversation.push_back(rollout_question(sample));

    const DecodeParams params = turn_params(cfg, cfg.group_temperature);
    const std::size_t min_steps = static_cast<std::size_t>(cfg.min_steps);
    const std::size_t max_steps = static_cast<std::size_t>(cfg.max_steps);

    std::vector<RoleStep> steps;
    bool forced = false;
    while (true) {
        RoleStep step = sample_step(teacher, conversation, params, cfg.parse_retries);
        if (forced) step.next_action = NextAction::FinalAnswer;
        if (step.next_action == NextAction::FinalAnswer && steps.size() + 1 < min_steps) {
            step.next_action = NextAction::Continue;  // too early, keep reasoning
        }
        steps.push_back(std::move(step));
        if (steps.back().next_action == NextAction::FinalAnswer) break;
        if (steps.size() == max_steps) {
            conversation.push_back(ChatMessage::user(kForcedFinalTurn));
            forced = true;
        } else {
            conversation.push_back(
                ChatMessage::user(prompts.get(TemplateId::RolloutFollowup).body));
        }
    }

    Prediction answer = extract_final_answer(steps.back(), teacher, cfg, conversation);
    return Trajectory::create(sample.id, std::move(steps), std::move(answer), max_steps + 1);
}

Prediction extract_final_answer(const RoleStep& final_step, Backend& teacher,
                                const EngineConfig& cfg,
                                std::vector<ChatMessage>& conversation) {
    if (auto direct = scan_yes_no(final_step.content)) {
        return Prediction::make_valid(*direct, final_step.content);
    }
    conversation.push_back(ChatMessage::user(kClarificationTurn));
    const std::string reply =
        teacher.generate(conversation, turn_params(cfg, cfg.eval_temperature)).front();
    conversation.push_back(ChatMessage::assistant(reply));
    if (auto clarified = scan_yes_no(reply)) {
        return Prediction::make_valid(*clarified, reply);
    }
    return Prediction::invalid(reply);
}

// ============================================================================
// filtering and triple construction
// ============================================================================

FilterDecision filter_and_flatten(const Sample& sample, const Trajectory& traj) {
    if (!sample.gold) {
        throw ValidationError("sample " + sample.id + " has no gold label");
    }
    FilterDecision decision;
    decision.record.sample_id = sample.id;
    decision.record.trajectory = traj;

    const Prediction& answer = traj.final_answer();
    if (!answer.valid()) {
        decision.action = FilterDecision::Action::Emit;
        decision.record.outcome = SynthesisRecord::Outcome::Discarded;
        decision.record.reason = "invalid_answer";
        return decision;
    }
    if (matches(answer, *sample.gold)) {
        decision.action = FilterDecision::Action::Emit;
        decision.record.outcome = SynthesisRecord::Outcome::CorrectFlattened;
        decision.record.sequence = flatten_trajectory(traj);
        return decision;
    }
    decision.action = FilterDecision::Action::StageForRevision;
    decision.flawed_flat = flatten_trajectory(traj);
    return decision;
}

SynthesisRecord build_revision_triple(const Sample& sample, const Trajectory& traj,
                                      const std::string& flawed_flat, Backend& critic,
                                      Backend& teacher, int retries, const EngineConfig& cfg,
                                      const PromptLibrary& prompts) {
    if (!sample.gold) {
        throw ValidationError("sample " + sample.id + " has no gold label");
    }
    SynthesisRecord record;
    record.sample_id = sample.id;
    record.trajectory = traj;
    record.draft = flawed_flat;

    const std::string critic_prompt =
        render_prompt(prompts.get(TemplateId::Critic), sample, {{"reasoning", flawed_flat}});
    const std::vector<ChatMessage> critic_messages{
        ChatMessage{Role::User, build_user_parts(critic_prompt, sample.image_ref)}};
    DecodeParams critic_params;
    critic_params.temperature = cfg.eval_temperature;
    critic_params.max_new_tokens = cfg.max_tokens_critic;
    const Critique critique =
        parse_critique(critic.generate(critic_messages, critic_params).front());
    record.feedback = critique.feedback;

    const std::string draft_prompt = render_prompt(
        prompts.get(PromptLibrary::draft_template_for(cfg.template_mode)), sample);
    const std::string revise_prompt = render_prompt(prompts.get(TemplateId::Revise), sample,
                                                    {{"feedback", critique.feedback}});
    const std::vector<ChatMessage> revise_messages{
        ChatMessage{Role::User, build_user_parts(draft_prompt, sample.image_ref)},
        ChatMessage::assistant(flawed_flat),
        ChatMessage::user(revise_prompt)};

    const DecodeParams revise_params = turn_params(cfg, cfg.triple_temperature);
    for (int attempt = 0; attempt <= retries; ++attempt) {
        const std::string candidate = teacher.generate(revise_messages, revise_params).front();
        const ReasoningOutput parsed = parse_reasoning(candidate);
        if (parsed.format_ok && matches(parsed.prediction, *sample.gold)) {
            record.outcome = SynthesisRecord::Outcome::FlawedTriple;
            record.revision = candidate;
            return record;
        }
    }
    record.outcome = SynthesisRecord::Outcome::Discarded;
    record.reason = "uncorrected";
    return record;
}

// ============================================================================
// corpus driver
// ============================================================================

double SynthesisStats::average_steps_sarcastic() const {
    return histogram_mean(histogram_sarcastic);
}

double SynthesisStats::average_steps_non_sarcastic() const {
    return histogram_mean(histogram_non_sarcastic);
}

double SynthesisStats::average_steps_all() const {
    auto merged = histogram_sarcastic;
    for (const auto& [steps, n] : histogram_non_sarcastic) merged[steps] += n;
    return histogram_mean(merged);
}

SynthesisStats run_synthesis(const std::vector<Sample>& samples, Backend& teacher,
                             Backend& critic, const EngineConfig& cfg,
                             const PromptLibrary& prompts, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream drafts_out(fs::path(out_dir) / "drafts.jsonl");
    std::ofstream triples_out(fs::path(out_dir) / "triples.jsonl");
    std::ofstream discards_out(fs::path(out_dir) / "discards.jsonl");
    if (!drafts_out || !triples_out || !discards_out) {
        throw ValidationError("cannot open synthesis output files under " + out_dir);
    }

    SynthesisStats stats;
    stats.total = samples.size();

    const auto discard = [&](const std::string& id, const std::string& reason) {
        nlohmann::ordered_json line;
        line["id"] = id;
        line["reason"] = reason;
        discards_out << line.dump() << "\n";
        ++stats.discards;
        ++stats.discard_reasons[reason];
    };
    const auto note_steps = [&stats](Label gold, std::size_t steps) {
        auto& hist = gold == Label::Sarcastic ? stats.histogram_sarcastic
                                              : stats.histogram_non_sarcastic;
        ++hist[steps];
    };

    for (const Sample& sample : samples) {
        if (!sample.gold) {
            throw ValidationError("sample " + sample.id + " has no gold label");
        }
        std::optional<Trajectory> traj;
        try {
            traj = run_rollout(sample, teacher, cfg, prompts);
        } catch (const StepParseFailure&) {
            discard(sample.id, "parse_failure");
            continue;
        } catch (const BackendError&) {
            discard(sample.id, "backend_error");
            continue;
        }

        FilterDecision decision = filter_and_flatten(sample, *traj);
        SynthesisRecord record;
        if (decision.action == FilterDecision::Action::StageForRevision) {
            try {
                record = build_revision_triple(sample, *traj, decision.flawed_flat, critic,
                                               teacher, cfg.triple_retries, cfg, prompts);
            } catch (const BackendError&) {
                discard(sample.id, "backend_error");
                continue;
            }
        } else {
            record = std::move(decision.record);
        }

        nlohmann::ordered_json base;
        base["id"] = sample.id;
        if (sample.image_ref) {
            base["image"] = *sample.image_ref;
        } else {
            base["image"] = nullptr;
        }
        base["text"] = sample.text;
        base["label"] = render_label(*sample.gold);

        switch (record.outcome) {
            case SynthesisRecord::Outcome::CorrectFlattened:
                base["sequence"] = record.sequence;
                drafts_out << base.dump() << "\n";
                ++stats.drafts;
                note_steps(*sample.gold, record.trajectory->length());
                break;
            case SynthesisRecord::Outcome::FlawedTriple:
                base["draft"] = record.draft;
                base["feedback"] = record.feedback;
                base["revision"] = record.revision;
                triples_out << base.dump() << "\n";
                ++stats.triples;
                note_steps(*sample.gold, record.trajectory->length());
                break;
            case SynthesisRecord::Outcome::Discarded:
                discard(sample.id, record.reason);
                break;
        }
    }

    std::ofstream stats_out(fs::path(out_dir) / "stats.json");
    stats_out << stats_to_json(stats).dump(2) << "\n";
    return stats;
}

nlohmann::ordered_json stats_to_json(const SynthesisStats& stats) {
    const auto hist_json = [](const std::map<std::size_t, std::size_t>& hist) {
        auto out = nlohmann::ordered_json::object();
        for (const auto& [steps, n] : hist) out[std::to_string(steps)] = n;
        return out;
    };
    auto merged = stats.histogram_sarcastic;
    for (const auto& [steps, n] : stats.histogram_non_sarcastic) merged[steps] += n;
    auto reasons = nlohmann::ordered_json::object();
    for (const auto& [reason, n] : stats.discard_reasons) reasons[reason] = n;

    nlohmann::ordered_json out;
    out["total"] = stats.total;
    out["drafts"] = stats.drafts;
    out["triples"] = stats.triples;
    out["discards"] = stats.discards;
    out["step_histogram"]["sarcastic"] = hist_json(stats.histogram_sarcastic);
    out["step_histogram"]["non_sarcastic"] = hist_json(stats.histogram_non_sarcastic);
    out["step_histogram"]["all"] = hist_json(merged);
    out["average_steps"]["sarcastic"] = stats.average_steps_sarcastic();
    out["average_steps"]["non_sarcastic"] = stats.average_steps_non_sarcastic();
    out["average_steps"]["all"] = stats.average_steps_all();
    out["discard_reasons"] = reasons;
    return out;
}

}  // namespace procrit
