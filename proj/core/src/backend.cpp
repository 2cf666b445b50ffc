#include "procrit/backend.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "httplib.h"
#include "procrit/rng.hpp"

namespace procrit {

// ============================================================================
// messages
// ============================================================================

namespace {

std::string role_name(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "user";
}

}  // namespace

ChatMessage ChatMessage::system(std::string text) {
    return ChatMessage{Role::System, {ContentPart::text(std::move(text))}};
}

ChatMessage ChatMessage::user(std::string text) {
    return ChatMessage{Role::User, {ContentPart::text(std::move(text))}};
}

ChatMessage ChatMessage::user_with_image(std::string image_ref, std::string text) {
    return ChatMessage{Role::User,
                       {ContentPart::image(std::move(image_ref)),
                        ContentPart::text(std::move(text))}};
}

ChatMessage ChatMessage::assistant(std::string text) {
    return ChatMessage{Role::Assistant, {ContentPart::text(std::move(text))}};
}

void validate_messages(const std::vector<ChatMessage>& messages) {
    if (messages.empty()) throw ValidationError("request needs at least one message");
    for (const ChatMessage& message : messages) {
        if (message.parts.empty()) throw ValidationError("message needs at least one part");
        for (const ContentPart& part : message.parts) {
            if (part.kind == ContentPart::Kind::ImageRef && message.role != Role::User) {
                throw ValidationError("image parts belong on user messages only");
            }
        }
    }
}

std::string render_request_text(const std::vector<ChatMessage>& messages) {
    std::ostringstream out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (i > 0) out << "\n";
        out << role_name(messages[i].role) << ": ";
        for (std::size_t p = 0; p < messages[i].parts.size(); ++p) {
            if (p > 0) out << " | ";
            const ContentPart& part = messages[i].parts[p];
            if (part.kind == ContentPart::Kind::ImageRef) {
                out << "[image:" << part.value << "]";
            } else {
                out << part.value;
            }
        }
    }
    return out.str();
}

// ============================================================================
// scripted backend
// ============================================================================

struct ScriptedBackend::Impl {
    std::mutex mutex;
    std::deque<std::string> default_queue;
    std::unordered_map<std::uint64_t, std::deque<std::string>> keyed;
    struct RuleState {
        ScriptRule rule;
        std::size_t next = 0;
    };
    std::vector<RuleState> rules;
    std::vector<std::string> requests;

    std::string next_reply(const std::string& text, std::uint64_t key) {
        const auto keyed_it = keyed.find(key);
        if (keyed_it != keyed.end() && !keyed_it->second.empty()) {
            std::string reply = std::move(keyed_it->second.front());
            keyed_it->second.pop_front();
            return reply;
        }
        for (RuleState& state : rules) {
            if (state.rule.contains.empty() || state.rule.replies.empty()) continue;
            if (text.find(state.rule.contains) == std::string::npos) continue;
            if (state.rule.cycle) {
                return state.rule.replies[state.next++ % state.rule.replies.size()];
            }
            if (state.next < state.rule.replies.size()) return state.rule.replies[state.next++];
            // A consumed one-shot rule no longer claims its requests.
        }
        if (!default_queue.empty()) {
            std::string reply = std::move(default_queue.front());
            default_queue.pop_front();
            return reply;
        }
        throw ScriptExhausted();
    }
};

std::shared_ptr<ScriptedBackend::Impl> ScriptedBackend::make_impl() {
    return std::make_shared<Impl>();
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
    auto backend = std::make_shared<ScriptedBackend>();
    if (path.empty()) return backend;

    std::ifstream in(path);
    if (!in) throw ConfigError("script not found: " + path);
    nlohmann::json script;
    try {
        in >> script;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("script " + path + " is not valid JSON: " + e.what());
    }
    if (!script.is_object()) throw ConfigError("script " + path + " must be a JSON object");

    const auto require_strings = [&](const nlohmann::json& arr, const char* where) {
        if (!arr.is_array()) throw ConfigError("script " + path + ": " + where + " must be an array");
        for (const auto& item : arr) {
            if (!item.is_string()) {
                throw ConfigError("script " + path + ": " + where + " entries must be strings");
            }
        }
    };

    if (script.contains("default")) {
        require_strings(script["default"], "default");
        for (const auto& reply : script["default"]) {
            backend->push_default(reply.get<std::string>());
        }
    }
    if (script.contains("rules")) {
        if (!script["rules"].is_array()) throw ConfigError("script " + path + ": rules must be an array");
        for (const auto& rule_json : script["rules"]) {
            ScriptRule rule;
            if (!rule_json.contains("contains") || !rule_json["contains"].is_string()) {
                throw ConfigError("script " + path + ": each rule needs a contains string");
            }
            rule.contains = rule_json["contains"].get<std::string>();
            if (rule_json.contains("replies")) {
                require_strings(rule_json["replies"], "rule replies");
                for (const auto& reply : rule_json["replies"]) {
                    rule.replies.push_back(reply.get<std::string>());
                }
            }
            if (rule_json.contains("cycle")) {
                if (!rule_json["cycle"].is_boolean()) {
                    throw ConfigError("script " + path + ": cycle must be a boolean");
                }
                rule.cycle = rule_json["cycle"].get<bool>();
            }
            backend->add_rule(std::move(rule));
        }
    }
    if (script.contains("keyed")) {
        if (!script["keyed"].is_array()) throw ConfigError("script " + path + ": keyed must be an array");
        for (const auto& entry : script["keyed"]) {
            if (!entry.contains("request") || !entry["request"].is_string()) {
                throw ConfigError("script " + path + ": each keyed entry needs a request string");
            }
            require_strings(entry["replies"], "keyed replies");
            const std::uint64_t key = fnv1a64(entry["request"].get<std::string>());
            for (const auto& reply : entry["replies"]) {
                backend->impl_->keyed[key].push_back(reply.get<std::string>());
            }
        }
    }
    return backend;
}

std::vector<std::string> ScriptedBackend::generate(const std::vector<ChatMessage>& messages,
                                                   const DecodeParams& params) {
    validate_messages(messages);
    if (params.n < 1) throw ValidationError("n must be at least 1");
    const std::string text = render_request_text(messages);
    const std::uint64_t key = fnv1a64(text);

    std::lock_guard<std::mutex> lock(impl_->mutex);
    impl_->requests.push_back(text);
    std::vector<std::string> out;
    out.reserve(params.n);
    for (int i = 0; i < params.n; ++i) out.push_back(impl_->next_reply(text, key));
    return out;
}

void ScriptedBackend::push_default(std::string reply) {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    impl_->default_queue.push_back(std::move(reply));
}

void ScriptedBackend::push_keyed(const std::vector<ChatMessage>& request, std::string reply) {
    const std::uint64_t key = fnv1a64(render_request_text(request));
    std::lock_guard<std::mutex> lock(impl_->mutex);
    impl_->keyed[key].push_back(std::move(reply));
}

void ScriptedBackend::add_rule(ScriptRule rule) {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    impl_->rules.push_back({std::move(rule), 0});
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    return impl_->requests.size();
}

std::string ScriptedBackend::request_text(std::size_t i) const {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    if (i >= impl_->requests.size()) {
        throw ValidationError("no request " + std::to_string(i) + " recorded");
    }
    return impl_->requests[i];
}

// ============================================================================
// HTTP request body
// ============================================================================

namespace {

std::string base64_encode(const std::string& bytes) {
    static const char* alphabet =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        const unsigned triple = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                                static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(alphabet[(triple >> 18) & 63]);
        out.push_back(alphabet[(triple >> 12) & 63]);
        out.push_back(alphabet[(triple >> 6) & 63]);
        out.push_back(alphabet[triple & 63]);
        i += 3;
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const unsigned triple = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(alphabet[(triple >> 18) & 63]);
        out.push_back(alphabet[(triple >> 12) & 63]);
        out += "==";
    } else if (rest == 2) {
        const unsigned triple = (static_cast<unsigned char>(bytes[i]) << 16) |
                                (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(alphabet[(triple >> 18) & 63]);
        out.push_back(alphabet[(triple >> 12) & 63]);
        out.push_back(alphabet[(triple >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

std::string image_mime(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png") return "image/png";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    if (ext == ".bmp") return "image/bmp";
    return "image/jpeg";
}

// Local files become base64 data URIs; anything else passes through.
std::string resolve_image_url(const std::string& ref) {
    std::error_code ec;
    const std::filesystem::path path(ref);
    if (!std::filesystem::is_regular_file(path, ec)) return ref;
    std::ifstream in(path, std::ios::binary);
    if (!in) return ref;
    std::ostringstream bytes;
    bytes << in.rdbuf();
    return "data:" + image_mime(path) + ";base64," + base64_encode(bytes.str());
}

}  // namespace

std::string build_chat_request_body(const BackendSpec& spec,
                                    const std::vector<ChatMessage>& messages,
                                    const DecodeParams& params) {
    nlohmann::ordered_json body;
    body["model"] = spec.model;

    nlohmann::ordered_json rendered = nlohmann::ordered_json::array();
    for (const ChatMessage& message : messages) {
        nlohmann::ordered_json entry;
        entry["role"] = role_name(message.role);
        const bool has_image =
            std::any_of(message.parts.begin(), message.parts.end(), [](const ContentPart& p) {
                return p.kind == ContentPart::Kind::ImageRef;
            });
        if (!has_image && message.parts.size() == 1) {
            entry["content"] = message.parts.front().value;
        } else {
            nlohmann::ordered_json parts = nlohmann::ordered_json::array();
            for (const ContentPart& part : message.parts) {
                if (part.kind == ContentPart::Kind::ImageRef) {
                    parts.push_back({{"type", "image_url"},
                                     {"image_url", {{"url", resolve_image_url(part.value)}}}});
                } else {
                    parts.push_back({{"type", "text"}, {"text", part.value}});
                }
            }
            entry["content"] = std::move(parts);
        }
        rendered.push_back(std::move(entry));
    }
    body["messages"] = std::move(rendered);
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_new_tokens;
    body["n"] = params.n;
    if (params.seed) body["seed"] = *params.seed;
    return body.dump();
}

// ============================================================================
// HTTP backend
// ============================================================================

namespace {

// Bounded concurrency gate shared by all threads using one backend handle.
class Gate {
  public:
    explicit Gate(int slots) : slots_(slots) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [&] { return slots_ > 0; });
        --slots_;
    }
    void release() {
        {
            std::lock_guard<std::mutex> lock(mutex_);
            ++slots_;
        }
        cv_.notify_one();
    }

  private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int slots_;
};

struct GateGuard {
    explicit GateGuard(Gate& gate) : gate_(gate) { gate_.acquire(); }
    ~GateGuard() { gate_.release(); }
    Gate& gate_;
};

// Internal signal: the service refused a multi-choice request, caller
// should fan out to single-choice requests.
struct BatchRejected {
    int status;
};

bool is_timeout(httplib::Error error) {
    return error == httplib::Error::ConnectionTimeout || error == httplib::Error::Read ||
           error == httplib::Error::Write;
}

}  // namespace

struct HttpBackend::Impl {
    BackendSpec spec;
    Gate gate;
    std::string scheme_host;
    std::string path_prefix;

    Impl(BackendSpec s, int workers) : spec(std::move(s)), gate(workers) {
        const std::size_t scheme_end = spec.base_url.find("://");
        if (scheme_end == std::string::npos) {
            throw ConfigError("base_url must be an absolute URL: " + spec.base_url);
        }
        const std::size_t path_start = spec.base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            scheme_host = spec.base_url;
        } else {
            scheme_host = spec.base_url.substr(0, path_start);
            path_prefix = spec.base_url.substr(path_start);
            while (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
        }
    }

    httplib::Result post(const std::string& body) {
        GateGuard guard(gate);
        httplib::Client client(scheme_host);
        const auto sec = static_cast<time_t>(spec.timeout_s);
        const auto usec = static_cast<time_t>((spec.timeout_s - static_cast<double>(sec)) * 1e6);
        client.set_connection_timeout(sec, usec);
        client.set_read_timeout(sec, usec);
        client.set_write_timeout(sec, usec);

        httplib::Headers headers;
        if (!spec.api_key_env.empty()) {
            if (const char* token = std::getenv(spec.api_key_env.c_str())) {
                headers.emplace("Authorization", std::string("Bearer ") + token);
            }
        }
        return client.Post(path_prefix + "/v1/chat/completions", headers, body,
                           "application/json");
    }

    std::vector<std::string> parse_choices(const std::string& body, int n) {
        nlohmann::json response;
        try {
            response = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception&) {
            throw MalformedResponse("response body is not JSON");
        }
        if (!response.contains("choices") || !response["choices"].is_array() ||
            response["choices"].size() != static_cast<std::size_t>(n)) {
            throw MalformedResponse("response does not carry exactly n choices");
        }
        std::vector<std::string> out;
        for (const auto& choice : response["choices"]) {
            if (!choice.contains("message") || !choice["message"].contains("content") ||
                !choice["message"]["content"].is_string()) {
                throw MalformedResponse("choice has no message content");
            }
            out.push_back(choice["message"]["content"].get<std::string>());
        }
        return out;
    }

    std::vector<std::string> request_with_retries(const std::vector<ChatMessage>& messages,
                                                  const DecodeParams& params) {
        const std::string body = build_chat_request_body(spec, messages, params);
        const int attempts = 1 + spec.max_retries;
        long delay_ms = spec.backoff_initial_ms;

        enum class Failure { Transport, TimedOut, Status } last_failure = Failure::Transport;
        int last_status = 0;
        std::string last_transport;

        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
                delay_ms = std::min<long>(delay_ms * 2, spec.backoff_cap_ms);
            }
            httplib::Result result = post(body);
            if (!result) {
                last_failure = is_timeout(result.error()) ? Failure::TimedOut : Failure::Transport;
                last_transport = httplib::to_string(result.error());
                continue;
            }
            const int status = result->status;
            if (status == 200) return parse_choices(result->body, params.n);
            if (status >= 500 || status == 429) {
                last_failure = Failure::Status;
                last_status = status;
                continue;
            }
            // Remaining 4xx: a multi-choice request may just be refused
            // wholesale; anything else is a hard error.
            if (params.n > 1) throw BatchRejected{status};
            throw HttpStatus(status);
        }

        switch (last_failure) {
            case Failure::TimedOut: throw Timeout();
            case Failure::Status: throw HttpStatus(last_status);
            case Failure::Transport: break;
        }
        throw BackendError("request failed: " + last_transport);
    }
};

HttpBackend::HttpBackend(BackendSpec spec, int workers)
    : impl_(std::make_shared<Impl>(std::move(spec), workers)) {}

HttpBackend::~HttpBackend() = default;

std::vector<std::string> HttpBackend::generate(const std::vector<ChatMessage>& messages,
                                               const DecodeParams& params) {
    validate_messages(messages);
    if (params.n < 1) throw ValidationError("n must be at least 1");

    try {
        return impl_->request_with_retries(messages, params);
    } catch (const BatchRejected&) {
        // Fan out to n single-choice requests, distinct seeds per slot.
        std::vector<std::future<std::vector<std::string>>> futures;
        for (int i = 0; i < params.n; ++i) {
            DecodeParams single = params;
            single.n = 1;
            if (single.seed) single.seed = *single.seed + static_cast<std::uint64_t>(i);
            futures.push_back(std::async(std::launch::async, [impl = impl_, messages, single] {
                return impl->request_with_retries(messages, single);
            }));
        }
        std::vector<std::string> out;
        for (auto& future : futures) {
            std::vector<std::string> one = future.get();
            out.push_back(std::move(one.front()));
        }
        return out;
    }
}

BackendPtr make_backend(const BackendSpec& spec, int workers) {
    if (spec.kind == BackendSpec::Kind::Http) {
        return std::make_shared<HttpBackend>(spec, workers);
    }
    return ScriptedBackend::from_file(spec.script_path);
}

}  // namespace procrit
