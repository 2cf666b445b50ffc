#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace procrit {

// Base class for every error the engine raises on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Configuration files, CLI usage, schema violations.
struct ConfigError : Error {
    using Error::Error;
};

// Domain-type invariant violated at construction time.
struct ValidationError : Error {
    using Error::Error;
};

// --- dataset records -------------------------------------------------------

struct MissingField : Error {
    explicit MissingField(const std::string& field)
        : Error("missing field: " + field), field(field) {}
    std::string field;
};

struct EmptyText : Error {
    EmptyText() : Error("text is empty after trimming") {}
};

struct BadLabel : Error {
    explicit BadLabel(const std::string& value)
        : Error("label must be \"yes\" or \"no\", got: " + value), value(value) {}
    std::string value;
};

// --- prompt rendering and structured parsing --------------------------------

struct MissingPlaceholder : Error {
    explicit MissingPlaceholder(const std::string& name)
        : Error("no value for placeholder {" + name + "}"), name(name) {}
    std::string name;
};

struct NotJson : Error {
    explicit NotJson(const std::string& msg = "no parseable JSON object found") : Error(msg) {}
};

struct MissingKey : Error {
    explicit MissingKey(const std::string& key)
        : Error("step object is missing key: " + key), key(key) {}
    std::string key;
};

struct BadNextAction : Error {
    explicit BadNextAction(const std::string& value)
        : Error("next_action must be 'continue' or 'final_answer', got: " + value),
          value(value) {}
    std::string value;
};

struct InvalidAnswer : Error {
    InvalidAnswer() : Error("trajectory final answer is invalid") {}
};

// --- backends ---------------------------------------------------------------

struct BackendError : Error {
    using Error::Error;
};

struct Timeout : BackendError {
    explicit Timeout(const std::string& msg = "request timed out") : BackendError(msg) {}
};

struct HttpStatus : BackendError {
    explicit HttpStatus(int status)
        : BackendError("http status " + std::to_string(status) + " after retries"),
          status(status) {}
    int status;
};

struct ScriptExhausted : BackendError {
    explicit ScriptExhausted(const std::string& msg = "scripted backend has no response left")
        : BackendError(msg) {}
};

struct MalformedResponse : BackendError {
    explicit MalformedResponse(const std::string& msg) : BackendError(msg) {}
};

// --- synthesis ---------------------------------------------------------------

struct StepParseFailure : Error {
    explicit StepParseFailure(const std::string& msg) : Error(msg) {}
};

// --- grpo ---------------------------------------------------------------------

struct GroupTooSmall : Error {
    explicit GroupTooSmall(std::size_t n)
        : Error("advantage group needs >= 2 members, got " + std::to_string(n)) {}
};

struct LengthMismatch : Error {
    explicit LengthMismatch(const std::string& msg) : Error(msg) {}
};

struct MissingRef : Error {
    MissingRef() : Error("kl_beta > 0 requires reference log-probs") {}
};

struct EmptyStage : Error {
    explicit EmptyStage(const std::string& msg) : Error(msg) {}
};

struct IndexOutOfRange : Error {
    explicit IndexOutOfRange(const std::string& msg) : Error(msg) {}
};

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& msg) : Error(msg) {}
};

// --- pipeline -----------------------------------------------------------------

struct EmptyFeedback : Error {
    EmptyFeedback() : Error("revision requires non-empty feedback") {}
};

struct MissingEndpoint : Error {
    explicit MissingEndpoint(const std::string& which)
        : Error("endpoint not configured: " + which) {}
};

// --- result files ----------------------------------------------------------------

struct FileParseError : Error {
    FileParseError(std::size_t line, const std::string& msg)
        : Error("line " + std::to_string(line) + ": " + msg), line(line) {}
    std::size_t line;
};

struct EmptyInput : Error {
    explicit EmptyInput(const std::string& msg = "input is empty") : Error(msg) {}
};

}  // namespace procrit
