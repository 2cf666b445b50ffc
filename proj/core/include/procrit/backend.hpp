#pragma once

// Text-generation backends. Two implementations share one interface: a
// deterministic scripted backend for tests and offline fixtures, and an
// HTTP client for OpenAI-compatible chat-completions services.
//
// Backends are shareable handles; generate() may be called from many
// workers at once. The HTTP client enforces a process-wide concurrency
// bound internally.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "procrit/errors.hpp"

namespace procrit {

// ============================================================================
// messages
// ============================================================================

enum class Role : std::uint8_t { System, User, Assistant };

struct ContentPart {
    enum class Kind : std::uint8_t { Text, ImageRef } kind;
    std::string value;  // text body, or an image path/URI forwarded opaquely

    static ContentPart text(std::string t) { return {Kind::Text, std::move(t)}; }
    static ContentPart image(std::string ref) { return {Kind::ImageRef, std::move(ref)}; }
};

struct ChatMessage {
    Role role;
    std::vector<ContentPart> parts;

    static ChatMessage system(std::string text);
    static ChatMessage user(std::string text);
    static ChatMessage user_with_image(std::string image_ref, std::string text);
    static ChatMessage assistant(std::string text);
};

// Throws ValidationError: every message needs a part, and image parts are
// only meaningful on user turns.
void validate_messages(const std::vector<ChatMessage>& messages);

// ============================================================================
// decode parameters and backend specification
// ============================================================================

struct DecodeParams {
    double temperature = 0.0;
    int max_new_tokens = 512;
    int n = 1;
    std::optional<std::uint64_t> seed;
};

struct BackendSpec {
    enum class Kind : std::uint8_t { Scripted, Http } kind = Kind::Scripted;

    // Scripted: path to a script file, or empty when the script is supplied
    // programmatically (tests construct ScriptedBackend directly).
    std::string script_path;

    // Http
    std::string base_url;
    std::string model;
    std::string api_key_env;   // name of the env var holding the bearer token
    double timeout_s = 30.0;
    int max_retries = 3;
    int backoff_initial_ms = 100;
    int backoff_cap_ms = 2000;

    static BackendSpec scripted(std::string path) {
        BackendSpec s;
        s.kind = Kind::Scripted;
        s.script_path = std::move(path);
        return s;
    }
    static BackendSpec http(std::string base_url, std::string model) {
        BackendSpec s;
        s.kind = Kind::Http;
        s.base_url = std::move(base_url);
        s.model = std::move(model);
        return s;
    }
};

// ============================================================================
// backend interface
// ============================================================================

class Backend {
  public:
    virtual ~Backend() = default;

    // Returns exactly params.n completion strings.
    virtual std::vector<std::string> generate(const std::vector<ChatMessage>& messages,
                                              const DecodeParams& params) = 0;
};

using BackendPtr = std::shared_ptr<Backend>;

// ============================================================================
// scripted backend
// ============================================================================

// A reply rule: if `contains` is non-empty the rule matches any request whose
// rendered text contains that needle; otherwise the rule is keyed by the
// exact request hash (set at load) or serves from the default queue.
struct ScriptRule {
    std::string contains;
    std::vector<std::string> replies;
    bool cycle = false;  // serve replies round-robin forever instead of consuming
};

// Deterministic canned backend. Resolution order per request:
//   1. exact request-content hash with queued replies,
//   2. first matching contains-rule,
//   3. the ordered default queue.
// Running dry raises ScriptExhausted.
class ScriptedBackend final : public Backend {
  public:
    ScriptedBackend() = default;

    // Script file format (JSON):
    // {
    //   "default": ["reply1", "reply2", ...],
    //   "rules": [{"contains": "needle", "replies": [...], "cycle": true}, ...],
    //   "keyed": [{"request": "<rendered request text>", "replies": [...]}]
    // }
    // All sections optional; sequential scripts need only "default".
    static std::shared_ptr<ScriptedBackend> from_file(const std::string& path);

    std::vector<std::string> generate(const std::vector<ChatMessage>& messages,
                                      const DecodeParams& params) override;

    // Programmatic construction for tests.
    void push_default(std::string reply);
    void push_keyed(const std::vector<ChatMessage>& request, std::string reply);
    void add_rule(ScriptRule rule);

    std::size_t calls() const;
    // Rendered text of the i-th request, for request-shape assertions.
    std::string request_text(std::size_t i) const;

  private:
    struct Impl;
    std::shared_ptr<Impl> impl_ = make_impl();
    static std::shared_ptr<Impl> make_impl();
};

// Canonical rendering of a request used for hash keys and contains-rules:
// one "role: part | part" line per message, image parts as "[image:ref]".
std::string render_request_text(const std::vector<ChatMessage>& messages);

// ============================================================================
// HTTP backend
// ============================================================================

// OpenAI-compatible chat-completions client. Retries on transport errors
// and 5xx/429 with capped exponential backoff (total attempts at most
// 1 + max_retries); when the service rejects n > 1 it falls back to n
// single-choice requests. Local-file image refs are inlined as base64 data
// URIs, other refs are sent verbatim.
class HttpBackend final : public Backend {
  public:
    // workers caps in-flight requests across all threads using this handle.
    explicit HttpBackend(BackendSpec spec, int workers = 8);
    ~HttpBackend() override;

    std::vector<std::string> generate(const std::vector<ChatMessage>& messages,
                                      const DecodeParams& params) override;

  private:
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

// Builds the JSON request body for a chat-completions call. Exposed so the
// wire format can be tested without a live server.
std::string build_chat_request_body(const BackendSpec& spec,
                                    const std::vector<ChatMessage>& messages,
                                    const DecodeParams& params);

// Instantiates the backend a spec describes.
BackendPtr make_backend(const BackendSpec& spec, int workers = 8);

}  // namespace procrit
