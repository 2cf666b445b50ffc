#pragma once

// Binary-classification evaluation over draft-critique-revise result
// files. The positive class is Sarcastic ("yes") throughout, and Invalid
// predictions are penalized as errors (gold yes counts a miss, gold no a
// false alarm) rather than dropped, so scores stay comparable across runs
// with different format-failure rates.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "procrit/types.hpp"

namespace procrit {

struct Confusion {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fp + fn + tn; }
};

// Throws LengthMismatch on ragged inputs, EmptyInput on empty ones.
Confusion confusion(const std::vector<Prediction>& preds, const std::vector<Label>& golds);

struct Prf1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
};

// Standard definitions; a zero denominator yields 0 for that metric.
Prf1 prf1(const Confusion& c);

// A fraction as a percentage rounded half-up to one decimal (83.1 style).
double percent_one_decimal(double fraction);

// ============================================================================
// per-round evaluation of a results file
// ============================================================================

struct RoundSelector {
    enum class Kind : std::uint8_t { Draft, Round, Final } kind = Kind::Final;
    int round = 0;  // 1-based, only for Kind::Round

    static RoundSelector draft() { return {Kind::Draft, 0}; }
    static RoundSelector at_round(int r) { return {Kind::Round, r}; }
    static RoundSelector final() { return {Kind::Final, 0}; }
};

struct ReportRow {
    std::string name;  // "Draft", "Revise 1", ..., "Final"
    Confusion counts;
    Prf1 metrics;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    std::size_t primary = 0;  // index of the selector's row
};

// Reads a JSONL results file (one draft-critique-revise record per line,
// as written by the pipeline) and evaluates the prediction stream at every
// depth: the draft row, one row per revision round, and the final row. A
// record with fewer rounds than a row's depth contributes its last
// available prediction, so each row is the pipeline truncated there.
// Throws FileParseError with the offending line number.
EvalReport evaluate_run(const std::string& results_file, RoundSelector selector);

// Aligned text table in F1/Acc/P/R column order.
std::string render_report_text(const EvalReport& report);

// {"rows":[{"name","f1","acc","p","r","tp","fp","fn","tn"}]} with the
// ratio metrics as one-decimal percentages.
nlohmann::json report_to_json(const EvalReport& report);

}  // namespace procrit
