#pragma once

// Engine configuration. The on-disk form is a flat JSON object whose keys
// are the dotted names listed below; CLI overrides (--set key=value) write
// into exactly the same namespace. Unknown keys are rejected in both
// places, never ignored.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "procrit/backend.hpp"
#include "procrit/errors.hpp"

namespace procrit {

enum class TemplateMode : std::uint8_t { Dynamic, Fixed, Generic };

TemplateMode parse_template_mode(const std::string& name);  // throws ConfigError
std::string render_template_mode(TemplateMode mode);

struct ToyConfig {
    int states = 6;          // toy.states - synthetic sample count (policy rows per stage)
    int vocab = 5;           // toy.vocab - token alphabet size
    int length = 4;          // toy.length - tokens emitted per completion
    int iterations = 500;    // toy.iterations
    double learning_rate = 1.0;  // toy.learning_rate
    bool shared_revision_state = false;  // toy.shared_revision_state - revisions reuse draft rows
};

struct EngineConfig {
    std::uint64_t seed = 0;  // seed

    // Group shape and objective weights.
    int group_size = 8;          // group.g - drafts per sample
    int revisions_per_parent = 4;  // group.m
    int parents_per_group = 2;     // group.k
    double lambda = 0.5;           // group.lambda - revise-stage weight
    double adv_epsilon = 1e-4;     // group.adv_epsilon
    double clip_epsilon = 0.2;     // group.clip_epsilon
    double kl_beta = 0.02;         // group.kl_beta - proposal-stage KL weight
    double kl_beta_critic = 0.0;   // group.kl_beta_critic

    // Trajectory synthesis rollout.
    int max_steps = 6;        // rollout.max_steps
    int min_steps = 2;        // rollout.min_steps
    int parse_retries = 2;    // rollout.parse_retries - per-turn reparse budget
    int triple_retries = 2;   // synthesis.triple_retries - revision attempts per flawed draft

    // Draft-critique-revise inference.
    int revision_rounds = 1;  // dcr.rounds - default round count
    int max_rounds = 5;       // dcr.max_rounds

    // Reward shaping.
    double eval_divisor = 2.0;  // rewards.eval_divisor - critic score normalizer

    // Mutual-refinement schedule.
    int critic_instances = 5000;    // schedule.critic_instances
    int proposal_instances = 2000;  // schedule.proposal_instances
    int cycles = 1;                 // schedule.cycles - critic->proposal alternations

    // Prompts.
    std::string prompt_dir;  // prompts.dir - optional override directory
    TemplateMode template_mode = TemplateMode::Dynamic;  // prompts.template

    // Backends. A role is configured when it has a script path or base URL.
    int workers = 8;  // backend.workers - HTTP concurrency bound
    BackendSpec proposal;  // backend.proposal.*
    BackendSpec critic;    // backend.critic.*
    BackendSpec teacher;   // backend.teacher.*

    // Decode parameters per phase.
    double group_temperature = 1.0;   // decode.group_temperature - RL group sampling
    double eval_temperature = 0.0;    // decode.eval_temperature - inference and probes
    double triple_temperature = 0.7;  // decode.triple_temperature - synthesis repair
    int max_tokens = 512;             // decode.max_tokens - proposal/teacher completions
    int max_tokens_critic = 768;      // decode.max_tokens_critic

    ToyConfig toy;
};

// Cross-field validation; throws ConfigError with the offending key.
void validate_config(const EngineConfig& cfg);

// Flat-object (de)serialization. from_json rejects unknown keys and type
// mismatches; to_json emits every key in canonical order.
EngineConfig config_from_json(const nlohmann::json& flat);
nlohmann::json config_to_json(const EngineConfig& cfg);

EngineConfig load_config(const std::string& path);  // ConfigError on IO/parse failure
void save_config(const EngineConfig& cfg, const std::string& path);

// Applies one dotted-path override, parsing the value by the key's type.
// Unknown keys and unparseable values raise ConfigError.
void apply_override(EngineConfig& cfg, const std::string& key, const std::string& value);

// Stable hex digest of the canonical serialized config, for run manifests.
std::string config_hash(const EngineConfig& cfg);

bool backend_configured(const BackendSpec& spec);

}  // namespace procrit
