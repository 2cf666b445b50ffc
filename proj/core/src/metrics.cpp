#include "procrit/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "procrit/errors.hpp"

namespace procrit {

Confusion confusion(const std::vector<Prediction>& preds, const std::vector<Label>& golds) {
    if (preds.size() != golds.size()) {
        throw LengthMismatch("confusion needs one gold per prediction");
    }
    if (preds.empty()) throw EmptyInput("no predictions to score");

    Confusion c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool gold_positive = golds[i] == Label::Sarcastic;
        if (!preds[i].valid()) {
            // Unparseable output counts against the model.
            (gold_positive ? c.fn : c.fp) += 1;
            continue;
        }
        const bool pred_positive = *preds[i].label == Label::Sarcastic;
        if (pred_positive && gold_positive) ++c.tp;
        else if (pred_positive && !gold_positive) ++c.fp;
        else if (!pred_positive && gold_positive) ++c.fn;
        else ++c.tn;
    }
    return c;
}

namespace {

double ratio(std::int64_t num, std::int64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Prf1 prf1(const Confusion& c) {
    Prf1 m;
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.f1 = (m.precision + m.recall) == 0.0
               ? 0.0
               : 2.0 * m.precision * m.recall / (m.precision + m.recall);
    m.accuracy = ratio(c.tp + c.tn, c.total());
    return m;
}

double percent_one_decimal(double fraction) {
    return std::floor(fraction * 1000.0 + 0.5) / 10.0;
}

// ============================================================================
// results-file evaluation
// ============================================================================

namespace {

struct ResultRecord {
    Label gold;
    Prediction draft_pred;
    std::vector<Prediction> round_preds;
    Prediction final_pred;
};

Prediction pred_field(const nlohmann::json& obj, const char* key) {
    if (!obj.contains(key) || !obj[key].is_string()) {
        throw ValidationError(std::string("missing prediction field '") + key + "'");
    }
    return parse_prediction_token(obj[key].get<std::string>());
}

ResultRecord parse_result_line(const nlohmann::json& line) {
    ResultRecord rec;
    if (!line.contains("gold") || !line["gold"].is_string()) {
        throw ValidationError("record has no gold label");
    }
    const auto gold = parse_label(line["gold"].get<std::string>());
    if (!gold) throw ValidationError("gold label outside yes/no");
    rec.gold = *gold;

    if (!line.contains("draft") || !line["draft"].is_object()) {
        throw ValidationError("record has no draft object");
    }
    rec.draft_pred = pred_field(line["draft"], "pred");

    if (line.contains("rounds")) {
        if (!line["rounds"].is_array()) throw ValidationError("rounds must be an array");
        for (const auto& round : line["rounds"]) {
            rec.round_preds.push_back(pred_field(round, "pred"));
        }
    }
    rec.final_pred = pred_field(line, "final_pred");
    return rec;
}

// The pipeline truncated at `depth` revisions: the latest prediction that
// exists at that depth.
Prediction pred_at_depth(const ResultRecord& rec, std::size_t depth) {
    if (depth == 0 || rec.round_preds.empty()) return rec.draft_pred;
    return rec.round_preds[std::min(depth, rec.round_preds.size()) - 1];
}

ReportRow make_row(std::string name, const std::vector<Prediction>& preds,
                   const std::vector<Label>& golds) {
    ReportRow row;
    row.name = std::move(name);
    row.counts = confusion(preds, golds);
    row.metrics = prf1(row.counts);
    return row;
}

}  // namespace

EvalReport evaluate_run(const std::string& results_file, RoundSelector selector) {
    std::ifstream in(results_file);
    if (!in) throw FileParseError(0, "cannot open " + results_file);

    std::vector<ResultRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim_copy(line).empty()) continue;
        try {
            records.push_back(parse_result_line(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw FileParseError(line_no, e.what());
        }
    }
    if (records.empty()) throw EmptyInput();

    std::size_t max_rounds = 0;
    std::vector<Label> golds;
    for (const ResultRecord& rec : records) {
        max_rounds = std::max(max_rounds, rec.round_preds.size());
        golds.push_back(rec.gold);
    }

    EvalReport report;
    {
        std::vector<Prediction> preds;
        for (const ResultRecord& rec : records) preds.push_back(rec.draft_pred);
        report.rows.push_back(make_row("Draft", preds, golds));
    }
    for (std::size_t r = 1; r <= max_rounds; ++r) {
        std::vector<Prediction> preds;
        for (const ResultRecord& rec : records) preds.push_back(pred_at_depth(rec, r));
        report.rows.push_back(make_row("Revise " + std::to_string(r), preds, golds));
    }
    {
        std::vector<Prediction> preds;
        for (const ResultRecord& rec : records) preds.push_back(rec.final_pred);
        report.rows.push_back(make_row("Final", preds, golds));
    }

    switch (selector.kind) {
        case RoundSelector::Kind::Draft: report.primary = 0; break;
        case RoundSelector::Kind::Final: report.primary = report.rows.size() - 1; break;
        case RoundSelector::Kind::Round:
            if (selector.round < 1 || static_cast<std::size_t>(selector.round) > max_rounds) {
                throw ValidationError("results file has no revision round " +
                                      std::to_string(selector.round));
            }
            report.primary = static_cast<std::size_t>(selector.round);
            break;
    }
    return report;
}

std::string render_report_text(const EvalReport& report) {
    std::size_t name_width = 5;
    for (const ReportRow& row : report.rows) name_width = std::max(name_width, row.name.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(name_width)) << "round" << std::right;
    for (const char* col : {"F1", "Acc", "P", "R"}) out << std::setw(7) << col;
    for (const char* col : {"tp", "fp", "fn", "tn"}) out << std::setw(7) << col;
    out << "\n";

    out << std::fixed << std::setprecision(1);
    for (const ReportRow& row : report.rows) {
        out << std::left << std::setw(static_cast<int>(name_width)) << row.name << std::right;
        out << std::setw(7) << percent_one_decimal(row.metrics.f1);
        out << std::setw(7) << percent_one_decimal(row.metrics.accuracy);
        out << std::setw(7) << percent_one_decimal(row.metrics.precision);
        out << std::setw(7) << percent_one_decimal(row.metrics.recall);
        out << std::setw(7) << row.counts.tp << std::setw(7) << row.counts.fp << std::setw(7)
            << row.counts.fn << std::setw(7) << row.counts.tn;
        out << "\n";
    }
    return out.str();
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const ReportRow& row : report.rows) {
        rows.push_back({
            {"name", row.name},
            {"f1", percent_one_decimal(row.metrics.f1)},
            {"acc", percent_one_decimal(row.metrics.accuracy)},
            {"p", percent_one_decimal(row.metrics.precision)},
            {"r", percent_one_decimal(row.metrics.recall)},
            {"tp", row.counts.tp},
            {"fp", row.counts.fp},
            {"fn", row.counts.fn},
            {"tn", row.counts.tn},
        });
    }
    return nlohmann::json{{"rows", rows}};
}

}  // namespace procrit
