#include "procrit/config.hpp"

#include <fstream>
#include <functional>
#include <vector>

#include "procrit/rng.hpp"

namespace procrit {

TemplateMode parse_template_mode(const std::string& name) {
    if (name == "dynamic") return TemplateMode::Dynamic;
    if (name == "fixed") return TemplateMode::Fixed;
    if (name == "generic") return TemplateMode::Generic;
    throw ConfigError("template mode must be dynamic, fixed, or generic; got '" + name + "'");
}

std::string render_template_mode(TemplateMode mode) {
    switch (mode) {
        case TemplateMode::Dynamic: return "dynamic";
        case TemplateMode::Fixed: return "fixed";
        case TemplateMode::Generic: return "generic";
    }
    return "dynamic";
}

bool backend_configured(const BackendSpec& spec) {
    return !spec.script_path.empty() || !spec.base_url.empty();
}

namespace {

enum class KeyType { Int, UInt, Real, Bool, Str };

struct Entry {
    std::string key;
    KeyType type;
    std::function<void(EngineConfig&, const nlohmann::json&)> set;
    std::function<nlohmann::json(const EngineConfig&)> get;
};

[[noreturn]] void type_error(const std::string& key, const char* expected) {
    throw ConfigError("config key '" + key + "' expects " + expected);
}

Entry int_entry(std::string key, std::function<int&(EngineConfig&)> ref) {
    Entry e{key, KeyType::Int, nullptr, nullptr};
    e.set = [key, ref](EngineConfig& c, const nlohmann::json& v) {
        if (!v.is_number_integer()) type_error(key, "an integer");
        ref(c) = v.get<int>();
    };
    e.get = [ref](const EngineConfig& c) { return ref(const_cast<EngineConfig&>(c)); };
    return e;
}

Entry uint_entry(std::string key, std::function<std::uint64_t&(EngineConfig&)> ref) {
    Entry e{key, KeyType::UInt, nullptr, nullptr};
    e.set = [key, ref](EngineConfig& c, const nlohmann::json& v) {
        if (!v.is_number_integer()) type_error(key, "an integer");
        ref(c) = v.get<std::uint64_t>();
    };
    e.get = [ref](const EngineConfig& c) { return ref(const_cast<EngineConfig&>(c)); };
    return e;
}

Entry real_entry(std::string key, std::function<double&(EngineConfig&)> ref) {
    Entry e{key, KeyType::Real, nullptr, nullptr};
    e.set = [key, ref](EngineConfig& c, const nlohmann::json& v) {
        if (!v.is_number()) type_error(key, "a number");
        ref(c) = v.get<double>();
    };
    e.get = [ref](const EngineConfig& c) { return ref(const_cast<EngineConfig&>(c)); };
    return e;
}

Entry bool_entry(std::string key, std::function<bool&(EngineConfig&)> ref) {
    Entry e{key, KeyType::Bool, nullptr, nullptr};
    e.set = [key, ref](EngineConfig& c, const nlohmann::json& v) {
        if (!v.is_boolean()) type_error(key, "a boolean");
        ref(c) = v.get<bool>();
    };
    e.get = [ref](const EngineConfig& c) { return ref(const_cast<EngineConfig&>(c)); };
    return e;
}

Entry str_entry(std::string key, std::function<std::string&(EngineConfig&)> ref) {
    Entry e{key, KeyType::Str, nullptr, nullptr};
    e.set = [key, ref](EngineConfig& c, const nlohmann::json& v) {
        if (!v.is_string()) type_error(key, "a string");
        ref(c) = v.get<std::string>();
    };
    e.get = [ref](const EngineConfig& c) { return ref(const_cast<EngineConfig&>(c)); };
    return e;
}

void add_backend_entries(std::vector<Entry>& entries, const std::string& role,
                         std::function<BackendSpec&(EngineConfig&)> spec) {
    const std::string prefix = "backend." + role + ".";
    {
        Entry e{prefix + "kind", KeyType::Str, nullptr, nullptr};
        e.set = [key = e.key, spec](EngineConfig& c, const nlohmann::json& v) {
            if (!v.is_string()) type_error(key, "a string");
            const std::string kind = v.get<std::string>();
            if (kind == "scripted") {
                spec(c).kind = BackendSpec::Kind::Scripted;
            } else if (kind == "http") {
                spec(c).kind = BackendSpec::Kind::Http;
            } else {
                throw ConfigError("config key '" + key + "' must be scripted or http, got '" +
                                  kind + "'");
            }
        };
        e.get = [spec](const EngineConfig& c) {
            return spec(const_cast<EngineConfig&>(c)).kind == BackendSpec::Kind::Http
                       ? "http"
                       : "scripted";
        };
        entries.push_back(std::move(e));
    }
    entries.push_back(str_entry(prefix + "script",
                                [spec](EngineConfig& c) -> std::string& { return spec(c).script_path; }));
    entries.push_back(str_entry(prefix + "base_url",
                                [spec](EngineConfig& c) -> std::string& { return spec(c).base_url; }));
    entries.push_back(str_entry(prefix + "model",
                                [spec](EngineConfig& c) -> std::string& { return spec(c).model; }));
    entries.push_back(str_entry(prefix + "api_key_env",
                                [spec](EngineConfig& c) -> std::string& { return spec(c).api_key_env; }));
    entries.push_back(real_entry(prefix + "timeout_s",
                                 [spec](EngineConfig& c) -> double& { return spec(c).timeout_s; }));
    entries.push_back(int_entry(prefix + "max_retries",
                                [spec](EngineConfig& c) -> int& { return spec(c).max_retries; }));
    entries.push_back(int_entry(prefix + "backoff_initial_ms", [spec](EngineConfig& c) -> int& {
        return spec(c).backoff_initial_ms;
    }));
    entries.push_back(int_entry(prefix + "backoff_cap_ms", [spec](EngineConfig& c) -> int& {
        return spec(c).backoff_cap_ms;
    }));
}

std::vector<Entry> build_registry() {
    std::vector<Entry> entries;
    entries.push_back(uint_entry("seed", [](EngineConfig& c) -> std::uint64_t& { return c.seed; }));

    entries.push_back(int_entry("group.g", [](EngineConfig& c) -> int& { return c.group_size; }));
    entries.push_back(
        int_entry("group.m", [](EngineConfig& c) -> int& { return c.revisions_per_parent; }));
    entries.push_back(
        int_entry("group.k", [](EngineConfig& c) -> int& { return c.parents_per_group; }));
    entries.push_back(
        real_entry("group.lambda", [](EngineConfig& c) -> double& { return c.lambda; }));
    entries.push_back(
        real_entry("group.adv_epsilon", [](EngineConfig& c) -> double& { return c.adv_epsilon; }));
    entries.push_back(real_entry("group.clip_epsilon",
                                 [](EngineConfig& c) -> double& { return c.clip_epsilon; }));
    entries.push_back(
        real_entry("group.kl_beta", [](EngineConfig& c) -> double& { return c.kl_beta; }));
    entries.push_back(real_entry("group.kl_beta_critic",
                                 [](EngineConfig& c) -> double& { return c.kl_beta_critic; }));

    entries.push_back(
        int_entry("rollout.max_steps", [](EngineConfig& c) -> int& { return c.max_steps; }));
    entries.push_back(
        int_entry("rollout.min_steps", [](EngineConfig& c) -> int& { return c.min_steps; }));
    entries.push_back(int_entry("rollout.parse_retries",
                                [](EngineConfig& c) -> int& { return c.parse_retries; }));
    entries.push_back(int_entry("synthesis.triple_retries",
                                [](EngineConfig& c) -> int& { return c.triple_retries; }));

    entries.push_back(
        int_entry("dcr.rounds", [](EngineConfig& c) -> int& { return c.revision_rounds; }));
    entries.push_back(
        int_entry("dcr.max_rounds", [](EngineConfig& c) -> int& { return c.max_rounds; }));

    entries.push_back(real_entry("rewards.eval_divisor",
                                 [](EngineConfig& c) -> double& { return c.eval_divisor; }));

    entries.push_back(int_entry("schedule.critic_instances",
                                [](EngineConfig& c) -> int& { return c.critic_instances; }));
    entries.push_back(int_entry("schedule.proposal_instances",
                                [](EngineConfig& c) -> int& { return c.proposal_instances; }));
    entries.push_back(
        int_entry("schedule.cycles", [](EngineConfig& c) -> int& { return c.cycles; }));

    entries.push_back(
        str_entry("prompts.dir", [](EngineConfig& c) -> std::string& { return c.prompt_dir; }));
    {
        Entry e{"prompts.template", KeyType::Str, nullptr, nullptr};
        e.set = [key = e.key](EngineConfig& c, const nlohmann::json& v) {
            if (!v.is_string()) type_error(key, "a string");
            c.template_mode = parse_template_mode(v.get<std::string>());
        };
        e.get = [](const EngineConfig& c) { return render_template_mode(c.template_mode); };
        entries.push_back(std::move(e));
    }

    entries.push_back(
        int_entry("backend.workers", [](EngineConfig& c) -> int& { return c.workers; }));
    add_backend_entries(entries, "proposal",
                        [](EngineConfig& c) -> BackendSpec& { return c.proposal; });
    add_backend_entries(entries, "critic",
                        [](EngineConfig& c) -> BackendSpec& { return c.critic; });
    add_backend_entries(entries, "teacher",
                        [](EngineConfig& c) -> BackendSpec& { return c.teacher; });

    entries.push_back(real_entry("decode.group_temperature",
                                 [](EngineConfig& c) -> double& { return c.group_temperature; }));
    entries.push_back(real_entry("decode.eval_temperature",
                                 [](EngineConfig& c) -> double& { return c.eval_temperature; }));
    entries.push_back(real_entry("decode.triple_temperature",
                                 [](EngineConfig& c) -> double& { return c.triple_temperature; }));
    entries.push_back(
        int_entry("decode.max_tokens", [](EngineConfig& c) -> int& { return c.max_tokens; }));
    entries.push_back(int_entry("decode.max_tokens_critic",
                                [](EngineConfig& c) -> int& { return c.max_tokens_critic; }));

    entries.push_back(int_entry("toy.states", [](EngineConfig& c) -> int& { return c.toy.states; }));
    entries.push_back(int_entry("toy.vocab", [](EngineConfig& c) -> int& { return c.toy.vocab; }));
    entries.push_back(
        int_entry("toy.length", [](EngineConfig& c) -> int& { return c.toy.length; }));
    entries.push_back(
        int_entry("toy.iterations", [](EngineConfig& c) -> int& { return c.toy.iterations; }));
    entries.push_back(real_entry("toy.learning_rate",
                                 [](EngineConfig& c) -> double& { return c.toy.learning_rate; }));
    entries.push_back(bool_entry("toy.shared_revision_state", [](EngineConfig& c) -> bool& {
        return c.toy.shared_revision_state;
    }));
    return entries;
}

const std::vector<Entry>& registry() {
    static const std::vector<Entry> entries = build_registry();
    return entries;
}

const Entry& find_entry(const std::string& key) {
    for (const Entry& e : registry()) {
        if (e.key == key) return e;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

void check_range(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

}  // namespace

void validate_config(const EngineConfig& cfg) {
    check_range(cfg.group_size >= 1, "group.g must be at least 1");
    check_range(cfg.revisions_per_parent >= 1, "group.m must be at least 1");
    check_range(cfg.parents_per_group >= 1, "group.k must be at least 1");
    check_range(cfg.parents_per_group <= cfg.group_size, "group.k must not exceed group.g");
    check_range(cfg.lambda >= 0.0 && cfg.lambda <= 1.0, "group.lambda must lie in [0,1]");
    check_range(cfg.adv_epsilon > 0.0, "group.adv_epsilon must be positive");
    check_range(cfg.clip_epsilon > 0.0, "group.clip_epsilon must be positive");
    check_range(cfg.kl_beta >= 0.0, "group.kl_beta must be non-negative");
    check_range(cfg.kl_beta_critic >= 0.0, "group.kl_beta_critic must be non-negative");

    check_range(cfg.min_steps >= 2, "rollout.min_steps must be at least 2");
    check_range(cfg.min_steps <= cfg.max_steps, "rollout.min_steps must not exceed max_steps");
    check_range(cfg.parse_retries >= 0, "rollout.parse_retries must be non-negative");
    check_range(cfg.triple_retries >= 0, "synthesis.triple_retries must be non-negative");

    check_range(cfg.revision_rounds >= 0, "dcr.rounds must be non-negative");
    check_range(cfg.max_rounds >= 0, "dcr.max_rounds must be non-negative");
    check_range(cfg.revision_rounds <= cfg.max_rounds, "dcr.rounds must not exceed dcr.max_rounds");

    check_range(cfg.eval_divisor > 0.0, "rewards.eval_divisor must be positive");

    check_range(cfg.critic_instances >= 0, "schedule.critic_instances must be non-negative");
    check_range(cfg.proposal_instances >= 0, "schedule.proposal_instances must be non-negative");
    check_range(cfg.cycles >= 1, "schedule.cycles must be at least 1");

    check_range(cfg.workers >= 1, "backend.workers must be at least 1");
    for (const auto* spec : {&cfg.proposal, &cfg.critic, &cfg.teacher}) {
        check_range(spec->timeout_s > 0.0, "backend timeout_s must be positive");
        check_range(spec->max_retries >= 0, "backend max_retries must be non-negative");
        check_range(spec->backoff_initial_ms >= 0, "backend backoff_initial_ms must be non-negative");
        check_range(spec->backoff_cap_ms >= spec->backoff_initial_ms,
                    "backend backoff_cap_ms must be at least backoff_initial_ms");
    }

    check_range(cfg.group_temperature >= 0.0, "decode.group_temperature must be non-negative");
    check_range(cfg.eval_temperature >= 0.0, "decode.eval_temperature must be non-negative");
    check_range(cfg.triple_temperature >= 0.0, "decode.triple_temperature must be non-negative");
    check_range(cfg.max_tokens >= 1, "decode.max_tokens must be at least 1");
    check_range(cfg.max_tokens_critic >= 1, "decode.max_tokens_critic must be at least 1");

    check_range(cfg.toy.states >= 1, "toy.states must be at least 1");
    check_range(cfg.toy.vocab >= 2, "toy.vocab must be at least 2");
    check_range(cfg.toy.length >= 1, "toy.length must be at least 1");
    check_range(cfg.toy.iterations >= 0, "toy.iterations must be non-negative");
    check_range(cfg.toy.learning_rate >= 0.0, "toy.learning_rate must be non-negative");
}

EngineConfig config_from_json(const nlohmann::json& flat) {
    if (!flat.is_object()) throw ConfigError("config root must be a JSON object");
    EngineConfig cfg;
    for (const auto& [key, value] : flat.items()) {
        find_entry(key).set(cfg, value);
    }
    validate_config(cfg);
    return cfg;
}

nlohmann::json config_to_json(const EngineConfig& cfg) {
    nlohmann::json out = nlohmann::json::object();
    for (const Entry& e : registry()) out[e.key] = e.get(cfg);
    return out;
}

EngineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config not found: " + path);
    nlohmann::json flat;
    try {
        in >> flat;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(flat);
}

void save_config(const EngineConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config: " + path);
    out << config_to_json(cfg).dump(2) << "\n";
}

void apply_override(EngineConfig& cfg, const std::string& key, const std::string& value) {
    const Entry& entry = find_entry(key);
    nlohmann::json parsed;
    try {
        switch (entry.type) {
            case KeyType::Int: parsed = std::stoi(value); break;
            case KeyType::UInt: parsed = static_cast<std::uint64_t>(std::stoull(value)); break;
            case KeyType::Real: parsed = std::stod(value); break;
            case KeyType::Bool:
                if (value == "true" || value == "1") {
                    parsed = true;
                } else if (value == "false" || value == "0") {
                    parsed = false;
                } else {
                    throw ConfigError("override '" + key + "' expects true or false, got '" +
                                      value + "'");
                }
                break;
            case KeyType::Str: parsed = value; break;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        throw ConfigError("override '" + key + "' has unparseable value '" + value + "'");
    }
    entry.set(cfg, parsed);
}

std::string config_hash(const EngineConfig& cfg) {
    const std::uint64_t h = fnv1a64(config_to_json(cfg).dump());
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace procrit
