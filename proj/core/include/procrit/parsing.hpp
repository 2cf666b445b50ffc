#pragma once

// Grammars for everything the models emit: the rollout JSON step format,
// the <think>/<answer> reasoning format, and the <feedback>/<score>
// critique format, plus the flattening that turns a trajectory into one
// single-pass reasoning sequence.
//
// parse_reasoning and parse_critique are total: arbitrary bytes yield a
// result with format_ok=false rather than an exception, because these
// parsers sit on the reward path and malformed output is a signal, not a
// failure. Tag extraction is first-match with non-greedy content; repeated
// or nested tags fail the format check instead of guessing.

#include <optional>
#include <string>

#include "procrit/types.hpp"

namespace procrit {

// Finds the first balanced {...} object in raw, skipping code fences and
// prose, with JSON string and escape awareness. Candidates that balance
// but do not parse as JSON objects are skipped.
std::optional<std::string> extract_json_object(const std::string& raw);

// One rollout turn. Throws NotJson when no JSON object can be extracted,
// MissingKey for absent/mistyped title, content, or next_action,
// BadNextAction for values outside {continue, final_answer}.
RoleStep parse_role_step(const std::string& raw);

// "<think>Step1: {title}\n{content}\n\nStep2: ...</think>\n<answer>yes|no</answer>"
// Throws InvalidAnswer when the trajectory's final answer is Invalid.
std::string flatten_trajectory(const Trajectory& traj);

// Draft/revision completions. format_ok requires exactly one think block
// and one answer block in that order, non-blank think text, and a Valid
// answer; the fields are still filled best-effort when the check fails.
ReasoningOutput parse_reasoning(const std::string& raw);

// Critic completions. format_ok requires exactly one feedback block with
// non-blank content and exactly one score block holding an integer in
// {0,1,2}.
Critique parse_critique(const std::string& raw);

int format_reward(const ReasoningOutput& parsed);
int format_reward(const Critique& parsed);

}  // namespace procrit
