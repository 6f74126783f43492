#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsipipe/common.hpp"
#include "wsipipe/csv.hpp"

namespace wsipipe {

struct ScoreRow {
    std::string patch_id;
    std::string slide_id;
    int label = 0; // 1 = cancer
    double score = 0.0;
    std::string model;
};

// slide_id is recoverable from a patch id of the form <slide>_r<row>_c<col>.
inline std::string slide_id_from_patch_id(const std::string& patch_id) {
    const auto c = patch_id.rfind("_c");
    if (c == std::string::npos || c + 2 >= patch_id.size()) return patch_id;
    for (std::size_t i = c + 2; i < patch_id.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(patch_id[i]))) return patch_id;
    const auto r = patch_id.rfind("_r", c);
    if (r == std::string::npos || r + 2 >= c) return patch_id;
    for (std::size_t i = r + 2; i < c; ++i)
        if (!std::isdigit(static_cast<unsigned char>(patch_id[i]))) return patch_id;
    return patch_id.substr(0, r);
}

inline void save_scores(const std::vector<ScoreRow>& rows, const std::string& path) {
    CsvWriter w(path);
    w.row({"patch_id", "slide_id", "label", "score", "model"});
    for (const auto& r : rows)
        w.row({r.patch_id, r.slide_id, std::to_string(r.label), format_double(r.score), r.model});
    w.close();
}

inline std::vector<ScoreRow> load_scores(const std::string& path) {
    const CsvTable t = read_csv(path);
    const std::size_t ip = t.column("patch_id"), is = t.column("slide_id"), il = t.column("label"),
                      ic = t.column("score"), im = t.column("model");
    std::vector<ScoreRow> rows;
    rows.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        ScoreRow row;
        row.patch_id = r[ip];
        row.slide_id = r[is];
        const long lab = parse_long(r[il]);
        if (lab != 0 && lab != 1) throw ValidationError("scores: label must be 0 or 1 in '" + path + "'");
        row.label = static_cast<int>(lab);
        row.score = parse_double(r[ic]);
        row.model = r[im];
        rows.push_back(std::move(row));
    }
    return rows;
}

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
    double threshold = 0.0;
};

// ROC over descending score thresholds, one point per distinct score value
// (ties collapse into a single step). Starts at (0, 0) with +inf threshold.
inline std::vector<RocPoint> roc_curve(const std::vector<int>& labels,
                                       const std::vector<double>& scores) {
    if (labels.size() != scores.size()) throw ValidationError("roc: labels/scores size mismatch");
    if (labels.empty()) throw ValidationError("roc: empty input");
    std::size_t pos = 0, neg = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw ValidationError("roc: labels must be 0 or 1");
        if (!std::isfinite(scores[i])) throw ValidationError("roc: non-finite score");
        labels[i] ? ++pos : ++neg;
    }
    if (pos == 0 || neg == 0) throw ValidationError("roc: need both classes present");

    std::vector<std::size_t> idx(labels.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    std::vector<RocPoint> points;
    points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0, i = 0;
    while (i < idx.size()) {
        const double s = scores[idx[i]];
        while (i < idx.size() && scores[idx[i]] == s) {
            labels[idx[i]] ? ++tp : ++fp;
            ++i;
        }
        points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                          static_cast<double>(tp) / static_cast<double>(pos), s});
    }
    return points;
}

inline double auc_trapezoid(const std::vector<RocPoint>& roc) {
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i)
        area += (roc[i].fpr - roc[i - 1].fpr) * 0.5 * (roc[i].tpr + roc[i - 1].tpr);
    return area;
}

inline double auc(const std::vector<int>& labels, const std::vector<double>& scores) {
    return auc_trapezoid(roc_curve(labels, scores));
}

// Rank statistic: P(score_pos > score_neg) + 0.5 P(tie). Quadratic; an
// independent check of the trapezoid value in tests and reports.
inline double auc_mann_whitney(const std::vector<int>& labels, const std::vector<double>& scores) {
    double wins = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!labels[i]) continue;
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (labels[j]) continue;
            ++pairs;
            if (scores[i] > scores[j]) wins += 1.0;
            else if (scores[i] == scores[j]) wins += 0.5;
        }
    }
    if (pairs == 0) throw ValidationError("auc: need both classes present");
    return wins / static_cast<double>(pairs);
}

// Highest achieved TPR among operating points with FPR <= target. No
// interpolation: the curve is a step function over realizable thresholds.
inline double tpr_at_fpr(const std::vector<RocPoint>& roc, double target_fpr) {
    if (!(target_fpr >= 0.0 && target_fpr <= 1.0))
        throw ValidationError("tpr_at_fpr: target must be in [0, 1]");
    double best = 0.0;
    for (const auto& p : roc)
        if (p.fpr <= target_fpr) best = std::max(best, p.tpr);
    return best;
}

inline void save_roc_csv(const std::vector<RocPoint>& roc, const std::string& path) {
    CsvWriter w(path);
    w.row({"fpr", "tpr", "threshold"});
    for (const auto& p : roc)
        w.row({format_double(p.fpr), format_double(p.tpr),
                     std::isinf(p.threshold) ? "inf" : format_double(p.threshold)});
    w.close();
}

constexpr std::array<double, 3> kDefaultFprTargets{0.05, 0.1, 0.5};

struct EvalReport {
    std::string model;
    std::size_t positives = 0;
    std::size_t negatives = 0;
    double auc = 0.0;
    double auc_rank = 0.0; // Mann-Whitney cross-check
    std::vector<double> fpr_targets;
    std::vector<double> tpr; // aligned with fpr_targets
};

inline EvalReport evaluate_scores(const std::vector<int>& labels, const std::vector<double>& scores,
                                  const std::string& model_name,
                                  const std::vector<double>& fpr_targets = {
                                      kDefaultFprTargets.begin(), kDefaultFprTargets.end()}) {
    EvalReport rep;
    rep.model = model_name;
    for (int l : labels) l ? ++rep.positives : ++rep.negatives;
    const auto roc = roc_curve(labels, scores);
    rep.auc = auc_trapezoid(roc);
    rep.auc_rank = auc_mann_whitney(labels, scores);
    rep.fpr_targets = fpr_targets;
    for (double t : fpr_targets) rep.tpr.push_back(tpr_at_fpr(roc, t));
    return rep;
}

// Table-style report: one row per model, TPR columns named after the FPR
// operating points ("FP@0.05" etc.).
inline void save_eval_report_csv(const std::vector<EvalReport>& reports, const std::string& path) {
    if (reports.empty()) throw ValidationError("eval: no reports to write");
    CsvWriter w(path);
    std::vector<std::string> header{"model", "auc", "positives", "negatives"};
    for (double t : reports[0].fpr_targets) header.push_back("FP@" + format_double(t));
    w.row(header);
    for (const auto& r : reports) {
        if (r.fpr_targets != reports[0].fpr_targets)
            throw ValidationError("eval: reports disagree on FPR targets");
        std::vector<std::string> row{r.model, format_double(r.auc), std::to_string(r.positives),
                                     std::to_string(r.negatives)};
        for (double v : r.tpr) row.push_back(format_double(v));
        w.row(row);
    }
    w.close();
}

inline void save_eval_report_json(const std::vector<EvalReport>& reports, const std::string& path) {
    nlohmann::json out;
    out["tpr_rule"] = "max tpr over roc points with fpr <= target (step rule, no interpolation)";
    out["models"] = nlohmann::json::array();
    for (const auto& r : reports) {
        nlohmann::json targets = nlohmann::json::object();
        for (std::size_t i = 0; i < r.fpr_targets.size(); ++i)
            targets["FP@" + format_double(r.fpr_targets[i])] = r.tpr[i];
        out["models"].push_back({{"model", r.model},
                                 {"positives", r.positives},
                                 {"negatives", r.negatives},
                                 {"auc", r.auc},
                                 {"auc_rank", r.auc_rank},
                                 {"tpr_at_fpr", targets}});
    }
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("eval: cannot open '" + path + "' for writing");
    f << out.dump(2) << "\n";
}

} // namespace wsipipe
