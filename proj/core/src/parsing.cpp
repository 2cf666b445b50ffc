#include "procrit/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include <nlohmann/json.hpp>

#include "procrit/errors.hpp"

namespace procrit {

namespace {

// Walks a candidate object from `start` (which must hold '{') and returns
// one past the matching close brace, or npos when the braces never balance.
std::size_t balanced_end(const std::string& raw, std::size_t start) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
        const char c = raw[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i + 1;
        }
    }
    return std::string::npos;
}

struct TagScan {
    int opens = 0;
    int closes = 0;
    std::size_t open_pos = std::string::npos;
    std::size_t close_pos = std::string::npos;      // first close anywhere
    std::optional<std::string> content;             // first open to first close after it
};

std::size_t count_token(const std::string& raw, const std::string& token, std::size_t& first) {
    std::size_t n = 0;
    for (std::size_t pos = raw.find(token); pos != std::string::npos;
         pos = raw.find(token, pos + token.size())) {
        if (n == 0) first = pos;
        ++n;
    }
    return n;
}

TagScan scan_tag(const std::string& raw, const std::string& name) {
    const std::string open = "<" + name + ">";
    const std::string close = "</" + name + ">";
    TagScan scan;
    scan.opens = static_cast<int>(count_token(raw, open, scan.open_pos));
    scan.closes = static_cast<int>(count_token(raw, close, scan.close_pos));
    if (scan.opens > 0) {
        const std::size_t body = scan.open_pos + open.size();
        const std::size_t end = raw.find(close, body);
        if (end != std::string::npos) scan.content = raw.substr(body, end - body);
    }
    return scan;
}

bool wellformed_once(const TagScan& scan) {
    return scan.opens == 1 && scan.closes == 1 && scan.open_pos < scan.close_pos;
}

std::string lower_copy(std::string text) {
    std::transform(text.begin(), text.end(), text.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return text;
}

Prediction prediction_from_answer(const std::optional<std::string>& content) {
    if (!content) return Prediction::invalid();
    const std::string trimmed = trim_copy(*content);
    const auto label = parse_label(lower_copy(trimmed));
    if (label) return Prediction::make_valid(*label, trimmed);
    return Prediction::invalid(trimmed);
}

CriticScore score_from_content(const std::optional<std::string>& content) {
    if (!content) return CriticScore::invalid();
    const std::string trimmed = trim_copy(*content);
    int value = 0;
    const char* begin = trimmed.data();
    const char* end = begin + trimmed.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) return CriticScore::invalid();
    if (value < 0 || value > 2) return CriticScore::invalid();
    return CriticScore::make_valid(value);
}

}  // namespace

std::optional<std::string> extract_json_object(const std::string& raw) {
    for (std::size_t start = raw.find('{'); start != std::string::npos;
         start = raw.find('{', start + 1)) {
        const std::size_t end = balanced_end(raw, start);
        if (end == std::string::npos) continue;
        std::string candidate = raw.substr(start, end - start);
        if (nlohmann::json::accept(candidate)) return candidate;
    }
    return std::nullopt;
}

RoleStep parse_role_step(const std::string& raw) {
    const auto object_text = extract_json_object(raw);
    if (!object_text) throw NotJson();
    const nlohmann::json object = nlohmann::json::parse(*object_text);

    for (const char* key : {"title", "content", "next_action"}) {
        if (!object.contains(key) || !object[key].is_string()) throw MissingKey(key);
    }

    RoleStep step;
    step.title = object["title"].get<std::string>();
    step.content = object["content"].get<std::string>();
    const std::string action = object["next_action"].get<std::string>();
    if (action == "continue") {
        step.next_action = NextAction::Continue;
    } else if (action == "final_answer") {
        step.next_action = NextAction::FinalAnswer;
    } else {
        throw BadNextAction(action);
    }
    return step;
}

std::string flatten_trajectory(const Trajectory& traj) {
    if (!traj.final_answer().valid()) throw InvalidAnswer();

    std::ostringstream out;
    out << "<think>";
    for (std::size_t i = 0; i < traj.steps().size(); ++i) {
        if (i > 0) out << "\n\n";
        out << "Step" << (i + 1) << ": " << traj.steps()[i].title << "\n"
            << traj.steps()[i].content;
    }
    out << "</think>\n<answer>" << render_label(*traj.final_answer().label) << "</answer>";
    return out.str();
}

ReasoningOutput parse_reasoning(const std::string& raw) {
    const TagScan think = scan_tag(raw, "think");
    const TagScan answer = scan_tag(raw, "answer");

    ReasoningOutput out;
    out.raw = raw;
    out.think_text = think.content.value_or("");
    out.prediction = prediction_from_answer(answer.content);
    out.format_ok = wellformed_once(think) && wellformed_once(answer) &&
                    think.close_pos < answer.open_pos && !trim_copy(out.think_text).empty() &&
                    out.prediction.valid();
    return out;
}

Critique parse_critique(const std::string& raw) {
    const TagScan feedback = scan_tag(raw, "feedback");
    const TagScan score = scan_tag(raw, "score");

    Critique out;
    out.raw = raw;
    out.feedback = feedback.content.value_or("");
    out.score = score_from_content(score.content);
    out.format_ok = wellformed_once(feedback) && wellformed_once(score) &&
                    !trim_copy(out.feedback).empty() && out.score.valid();
    return out;
}

int format_reward(const ReasoningOutput& parsed) { return parsed.format_ok ? 1 : 0; }

int format_reward(const Critique& parsed) { return parsed.format_ok ? 1 : 0; }

}  // namespace procrit
