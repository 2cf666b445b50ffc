// procrit - command-line front end for the proposal-critic engine.
//
// Every command creates a run directory <command>-<utc-stamp>-seed<seed>
// under --out and writes manifest.json there before any backend work
// starts, so even an interrupted run stays attributable. Exit codes:
// 0 success, 1 usage or configuration problem, 2 runtime failure.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "procrit/backend.hpp"
#include "procrit/config.hpp"
#include "procrit/dataset.hpp"
#include "procrit/errors.hpp"
#include "procrit/grpo.hpp"
#include "procrit/metrics.hpp"
#include "procrit/pipeline.hpp"
#include "procrit/prompts.hpp"
#include "procrit/rng.hpp"
#include "procrit/synthesis.hpp"

namespace fs = std::filesystem;
using namespace procrit;

namespace {

constexpr double kGradientTolerance = 1e-5;

struct Invocation {
    std::string command;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_root = "runs";
    std::optional<int> rounds;
    std::string template_mode;
    std::vector<std::string> overrides;
    std::string data_path;
    std::string results_path;
    std::string drafts_path;
    std::string round_sel = "final";
    bool execute = false;
};

std::string utc_stamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%dT%H%M%S", &tm);
    return buf;
}

fs::path make_run_dir(const Invocation& inv, std::uint64_t seed) {
    const std::string stem = inv.command + "-" + utc_stamp() + "-seed" + std::to_string(seed);
    fs::path dir = fs::path(inv.out_root) / stem;
    for (int n = 2; fs::exists(dir); ++n) {
        dir = fs::path(inv.out_root) / (stem + "-" + std::to_string(n));
    }
    fs::create_directories(dir);
    return dir;
}

void write_manifest(const fs::path& run_dir, const Invocation& inv, const EngineConfig& cfg,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    nlohmann::ordered_json doc;
    doc["command"] = inv.command;
    doc["timestamp_utc"] = utc_stamp();
    doc["seed"] = cfg.seed;
    doc["config_file"] = inv.config_path;
    doc["config_hash"] = config_hash(cfg);
    doc["overrides"] = inv.overrides;
    doc["inputs"] = inputs;
    doc["outputs"] = outputs;
    std::ofstream out(run_dir / "manifest.json");
    if (!out) throw ValidationError("cannot write manifest under " + run_dir.string());
    out << doc.dump(2) << "\n";
}

EngineConfig assemble_config(const Invocation& inv, bool config_required) {
    EngineConfig cfg;
    if (!inv.config_path.empty()) {
        if (!fs::exists(inv.config_path)) {
            throw ConfigError("config not found: " + inv.config_path);
        }
        cfg = load_config(inv.config_path);
    } else if (config_required) {
        throw ConfigError("--config is required for " + inv.command);
    }
    for (const std::string& kv : inv.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got: " + kv);
        }
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!inv.template_mode.empty()) cfg.template_mode = parse_template_mode(inv.template_mode);
    if (inv.seed) cfg.seed = *inv.seed;
    validate_config(cfg);
    return cfg;
}

void write_json_file(const fs::path& path, const nlohmann::ordered_json& doc) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

nlohmann::ordered_json stats_json(const BatchStats& stats) {
    nlohmann::ordered_json doc;
    doc["samples_in"] = stats.samples_in;
    doc["samples_emitted"] = stats.samples_emitted;
    doc["samples_skipped"] = stats.samples_skipped;
    doc["skip_log"] = stats.skip_log;
    return doc;
}

void write_report_files(const EvalReport& report, const fs::path& run_dir) {
    std::ofstream text(run_dir / "report.txt");
    if (!text) throw ValidationError("cannot write report.txt");
    text << render_report_text(report);
    std::ofstream json_out(run_dir / "report.json");
    if (!json_out) throw ValidationError("cannot write report.json");
    json_out << report_to_json(report).dump(2) << "\n";
}

RoundSelector parse_selector(const std::string& text) {
    if (text == "draft") return RoundSelector::draft();
    if (text == "final") return RoundSelector::final();
    int value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || value < 1) {
        throw ConfigError("--round expects draft, final, or a positive integer");
    }
    return RoundSelector::at_round(value);
}

std::map<std::string, std::string> load_preset_drafts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open drafts file " + path);
    std::map<std::string, std::string> drafts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_copy(line).empty()) continue;
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& err) {
            throw FileParseError(line_no, err.what());
        }
        if (!doc.contains("id") || !doc["id"].is_string() || !doc.contains("completion") ||
            !doc["completion"].is_string()) {
            throw FileParseError(line_no, "draft line needs string fields id and completion");
        }
        drafts[doc["id"].get<std::string>()] = doc["completion"].get<std::string>();
    }
    return drafts;
}

// ============================================================================
// command handlers
// ============================================================================

int cmd_synthesize(const Invocation& inv, const EngineConfig& cfg) {
    const auto samples = load_labeled_dataset(inv.data_path);
    if (!backend_configured(cfg.teacher)) throw MissingEndpoint("teacher");
    if (!backend_configured(cfg.critic)) throw MissingEndpoint("critic");

    const fs::path run_dir = make_run_dir(inv, cfg.seed);
    write_manifest(run_dir, inv, cfg, {inv.data_path},
                   {"drafts.jsonl", "triples.jsonl", "discards.jsonl", "stats.json"});

    const auto teacher = make_backend(cfg.teacher, cfg.workers);
    const auto critic = make_backend(cfg.critic, cfg.workers);
    const PromptLibrary prompts(cfg.prompt_dir);
    const SynthesisStats stats =
        run_synthesis(samples, *teacher, *critic, cfg, prompts, run_dir.string());
    std::cout << "synthesized " << stats.drafts << " drafts, " << stats.triples << " triples, "
              << stats.discards << " discards -> " << run_dir.string() << "\n";
    return 0;
}

int cmd_dcr(const Invocation& inv, const EngineConfig& cfg, int rounds) {
    const auto samples = load_dataset(inv.data_path);
    const bool labeled = std::all_of(samples.begin(), samples.end(),
                                     [](const Sample& s) { return s.gold.has_value(); });

    const fs::path run_dir = make_run_dir(inv, cfg.seed);
    std::vector<std::string> outputs{"results.jsonl"};
    if (labeled) {
        outputs.push_back("report.txt");
        outputs.push_back("report.json");
    }
    write_manifest(run_dir, inv, cfg, {inv.data_path}, outputs);

    const AgentEndpoints endpoints = AgentEndpoints::from_config(cfg);
    const PromptLibrary prompts(cfg.prompt_dir);
    std::vector<DcrRecord> records;
    records.reserve(samples.size());
    for (const Sample& sample : samples) {
        records.push_back(run_dcr(sample, endpoints, rounds, cfg, prompts));
    }
    const std::string results_path = (run_dir / "results.jsonl").string();
    write_dcr_records(records, results_path);

    if (labeled) {
        const EvalReport report = evaluate_run(results_path, RoundSelector::final());
        write_report_files(report, run_dir);
        std::cout << render_report_text(report);
    }
    std::cout << "wrote " << records.size() << " records -> " << results_path << "\n";
    return 0;
}

int cmd_rl_batch_proposal(const Invocation& inv, const EngineConfig& cfg) {
    const auto samples = load_labeled_dataset(inv.data_path);
    const fs::path run_dir = make_run_dir(inv, cfg.seed);
    write_manifest(run_dir, inv, cfg, {inv.data_path},
                   {"proposal_batch.jsonl", "batch_stats.json"});

    const AgentEndpoints endpoints = AgentEndpoints::from_config(cfg);
    const PromptLibrary prompts(cfg.prompt_dir);
    const auto result = generate_proposal_rl_batch(
        samples, endpoints, cfg, prompts, (run_dir / "proposal_batch.jsonl").string());
    write_json_file(run_dir / "batch_stats.json", stats_json(result.stats));
    std::cout << "emitted " << result.stats.samples_emitted << " groups ("
              << result.stats.samples_skipped << " skipped) -> " << run_dir.string() << "\n";
    return 0;
}

int cmd_rl_batch_critic(const Invocation& inv, const EngineConfig& cfg) {
    const auto samples = load_labeled_dataset(inv.data_path);
    std::map<std::string, std::string> preset;
    if (!inv.drafts_path.empty()) preset = load_preset_drafts(inv.drafts_path);

    const fs::path run_dir = make_run_dir(inv, cfg.seed);
    std::vector<std::string> inputs{inv.data_path};
    if (!inv.drafts_path.empty()) inputs.push_back(inv.drafts_path);
    write_manifest(run_dir, inv, cfg, inputs, {"critic_batch.jsonl", "batch_stats.json"});

    const AgentEndpoints endpoints = AgentEndpoints::from_config(cfg);
    const PromptLibrary prompts(cfg.prompt_dir);
    const BatchStats stats = generate_critic_rl_batch(
        samples, endpoints, cfg, prompts, (run_dir / "critic_batch.jsonl").string(),
        preset.empty() ? nullptr : &preset);
    write_json_file(run_dir / "batch_stats.json", stats_json(stats));
    std::cout << "emitted " << stats.samples_emitted << " critic groups ("
              << stats.samples_skipped << " skipped) -> " << run_dir.string() << "\n";
    return 0;
}

int cmd_schedule(const Invocation& inv, const EngineConfig& cfg) {
    const SchedulePlan plan = mutual_refinement_schedule(cfg);
    if (inv.execute && inv.data_path.empty()) {
        throw ConfigError("schedule --execute needs --data");
    }

    const fs::path run_dir = make_run_dir(inv, cfg.seed);
    std::vector<std::string> inputs;
    if (!inv.data_path.empty()) inputs.push_back(inv.data_path);
    std::vector<std::string> outputs{"plan.json"};
    if (inv.execute) {
        for (const StagePlan& stage : plan.stages) outputs.push_back(stage.batch_file);
        outputs.push_back("schedule_stats.json");
    }
    write_manifest(run_dir, inv, cfg, inputs, outputs);
    write_json_file(run_dir / "plan.json", plan_to_json(plan));

    if (!inv.execute) {
        std::cout << "wrote plan with " << plan.stages.size() << " stages -> "
                  << (run_dir / "plan.json").string() << "\n";
        return 0;
    }

    const auto samples = load_labeled_dataset(inv.data_path);
    const AgentEndpoints endpoints = AgentEndpoints::from_config(cfg);
    const PromptLibrary prompts(cfg.prompt_dir);
    const ScheduleRunResult result =
        run_schedule(plan, samples, endpoints, cfg, prompts, run_dir.string());

    nlohmann::ordered_json doc;
    auto stages = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < result.stage_stats.size(); ++s) {
        nlohmann::ordered_json row = stats_json(result.stage_stats[s]);
        row["batch_file"] = result.batch_files[s];
        stages.push_back(std::move(row));
    }
    doc["stages"] = std::move(stages);
    write_json_file(run_dir / "schedule_stats.json", doc);
    std::cout << "ran " << plan.stages.size() << " stages -> " << run_dir.string() << "\n";
    return 0;
}

int cmd_toy_check(const Invocation& inv, const EngineConfig& cfg) {
    const fs::path run_dir = make_run_dir(inv, cfg.seed);
    write_manifest(run_dir, inv, cfg, {}, {"gradient_check.json"});

    Rng init_rng(derive_seed(cfg.seed, "toy-init"));
    const ToyPolicy policy = ToyPolicy::random(toy_state_count(cfg), cfg.toy.vocab, init_rng, 0.1);
    Rng sample_rng(derive_seed(cfg.seed, "toy-sample", 0));
    Rng parent_rng(derive_seed(cfg.seed, "toy-parents", 0));
    const ToyRollout rollout = toy_rollout(policy, cfg, sample_rng, parent_rng);

    const auto analytic = toy_dual_stage_grad(policy, rollout.batch, cfg);
    const auto fd = toy_fd_grad(policy, rollout.batch, cfg);
    const double err = max_relative_error(analytic, fd);

    nlohmann::ordered_json doc;
    doc["max_relative_error"] = err;
    doc["tolerance"] = kGradientTolerance;
    doc["pass"] = err < kGradientTolerance;
    write_json_file(run_dir / "gradient_check.json", doc);

    std::cout << "max relative gradient error: " << err << "\n";
    return err < kGradientTolerance ? 0 : 2;
}

int cmd_toy_train(const Invocation& inv, const EngineConfig& cfg) {
    const fs::path run_dir = make_run_dir(inv, cfg.seed);
    write_manifest(run_dir, inv, cfg, {}, {"trace.csv"});

    const ToyTrainResult result = toy_train(cfg, cfg.seed);
    write_trace_csv(result.trace, (run_dir / "trace.csv").string());
    std::cout << "mean draft reward " << result.trace.front().mean_draft_reward << " -> "
              << result.trace.back().mean_draft_reward << " over " << cfg.toy.iterations
              << " iterations -> " << (run_dir / "trace.csv").string() << "\n";
    return 0;
}

int cmd_eval(const Invocation& inv, const EngineConfig& cfg) {
    const RoundSelector selector = parse_selector(inv.round_sel);
    const fs::path run_dir = make_run_dir(inv, cfg.seed);
    write_manifest(run_dir, inv, cfg, {inv.results_path}, {"report.txt", "report.json"});

    const EvalReport report = evaluate_run(inv.results_path, selector);
    write_report_files(report, run_dir);
    std::cout << render_report_text(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"proposal-critic reasoning pipeline engine"};
    app.require_subcommand(1);
    Invocation inv;

    const auto add_common = [&inv](CLI::App* cmd, bool config_required) {
        auto* config = cmd->add_option("--config", inv.config_path, "engine config JSON");
        if (config_required) config->required();
        cmd->add_option("--seed", inv.seed, "root seed (overrides the config)");
        cmd->add_option("--out", inv.out_root, "directory to create the run under");
        cmd->add_option("--set", inv.overrides, "config override key=value (repeatable)");
        cmd->add_option("--template", inv.template_mode, "draft template mode")
            ->check(CLI::IsMember({"dynamic", "fixed", "generic"}));
    };

    auto* synthesize = app.add_subcommand("synthesize", "roll out and filter a training corpus");
    add_common(synthesize, true);
    synthesize->add_option("--data", inv.data_path, "labeled dataset JSONL")->required();

    auto* draft_cmd = app.add_subcommand("draft", "draft-only inference over a dataset");
    add_common(draft_cmd, true);
    draft_cmd->add_option("--data", inv.data_path, "dataset JSONL")->required();

    auto* dcr = app.add_subcommand("dcr", "draft-critique-revise inference over a dataset");
    add_common(dcr, true);
    dcr->add_option("--data", inv.data_path, "dataset JSONL")->required();
    dcr->add_option("--rounds", inv.rounds, "revision rounds (default from config)");

    auto* rl_proposal =
        app.add_subcommand("rl-batch-proposal", "emit a proposal-stage GRPO batch file");
    add_common(rl_proposal, true);
    rl_proposal->add_option("--data", inv.data_path, "labeled dataset JSONL")->required();

    auto* rl_critic = app.add_subcommand("rl-batch-critic", "emit a critic-stage GRPO batch file");
    add_common(rl_critic, true);
    rl_critic->add_option("--data", inv.data_path, "labeled dataset JSONL")->required();
    rl_critic->add_option("--drafts", inv.drafts_path,
                          "preset drafts JSONL lines {id, completion}");

    auto* schedule = app.add_subcommand("schedule", "plan (and optionally run) mutual refinement");
    add_common(schedule, true);
    schedule->add_option("--data", inv.data_path, "labeled dataset JSONL (with --execute)");
    schedule->add_flag("--execute", inv.execute, "run the planned stages now");

    auto* toy_check =
        app.add_subcommand("toy-grpo-check", "verify the objective gradient on the toy policy");
    add_common(toy_check, false);

    auto* toy_train_cmd =
        app.add_subcommand("toy-grpo-train", "train the toy policy with the dual-stage objective");
    add_common(toy_train_cmd, false);

    auto* eval = app.add_subcommand("eval", "score a results file");
    add_common(eval, false);
    eval->add_option("--results", inv.results_path, "results JSONL from dcr/draft")->required();
    eval->add_option("--round", inv.round_sel, "primary row: draft, final, or a round number");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        if (err.get_exit_code() == 0) return app.exit(err);  // --help and friends
        std::cerr << "procrit: " << err.what() << "\n";
        return 1;
    }
    inv.command = app.get_subcommands().front()->get_name();

    EngineConfig cfg;
    try {
        const bool config_required =
            inv.command != "toy-grpo-check" && inv.command != "toy-grpo-train" &&
            inv.command != "eval";
        cfg = assemble_config(inv, config_required);
    } catch (const Error& err) {
        std::cerr << "procrit: " << err.what() << "\n";
        return 1;
    }

    try {
        if (inv.command == "synthesize") return cmd_synthesize(inv, cfg);
        if (inv.command == "draft") return cmd_dcr(inv, cfg, 0);
        if (inv.command == "dcr") return cmd_dcr(inv, cfg, inv.rounds.value_or(cfg.revision_rounds));
        if (inv.command == "rl-batch-proposal") return cmd_rl_batch_proposal(inv, cfg);
        if (inv.command == "rl-batch-critic") return cmd_rl_batch_critic(inv, cfg);
        if (inv.command == "schedule") return cmd_schedule(inv, cfg);
        if (inv.command == "toy-grpo-check") return cmd_toy_check(inv, cfg);
        if (inv.command == "toy-grpo-train") return cmd_toy_train(inv, cfg);
        if (inv.command == "eval") return cmd_eval(inv, cfg);
        std::cerr << "procrit: unknown command " << inv.command << "\n";
        return 1;
    } catch (const ConfigError& err) {
        std::cerr << "procrit: " << err.what() << "\n";
        return 1;
    } catch (const MissingEndpoint& err) {
        std::cerr << "procrit: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "procrit: " << err.what() << "\n";
        return 2;
    }
}
