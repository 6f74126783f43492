#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wsipipe/common.hpp"
#include "wsipipe/csv.hpp"
#include "wsipipe/rng.hpp"

namespace wsipipe {

struct KernelSpec {
    enum class Kind { linear, rbf };
    Kind kind = Kind::rbf;
    double gamma = 0.0; // rbf only; <= 0 means "auto" = 1/dim, resolved at training

    static KernelSpec parse(const std::string& name, double gamma) {
        if (name == "linear") return {Kind::linear, 0.0};
        if (name == "rbf") return {Kind::rbf, gamma};
        throw ValidationError("unknown kernel '" + name + "' (linear or rbf)");
    }
    const char* name() const { return kind == Kind::linear ? "linear" : "rbf"; }
};

inline double kernel_eval(const KernelSpec& kernel, const std::vector<double>& a,
                          const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ValidationError("kernel: dimension mismatch " + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()));
    if (kernel.kind == KernelSpec::Kind::linear) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
        return acc;
    }
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return std::exp(-kernel.gamma * d2);
}

// Per-feature training-set mean and standard deviation (population form);
// degenerate deviations are replaced by 1.
struct Standardization {
    std::vector<double> mean;
    std::vector<double> stddev;

    std::vector<double> apply(const std::vector<double>& x) const {
        if (x.size() != mean.size())
            throw ValidationError("feature dimension " + std::to_string(x.size()) + " does not match model " +
                                  std::to_string(mean.size()));
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / stddev[i];
        return out;
    }
};

inline Standardization fit_standardization(const std::vector<std::vector<double>>& rows) {
    const std::size_t dim = rows.at(0).size();
    Standardization s;
    s.mean.assign(dim, 0.0);
    s.stddev.assign(dim, 0.0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < dim; ++i) s.mean[i] += row[i];
    for (std::size_t i = 0; i < dim; ++i) s.mean[i] /= static_cast<double>(rows.size());
    for (const auto& row : rows)
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = row[i] - s.mean[i];
            s.stddev[i] += d * d;
        }
    for (std::size_t i = 0; i < dim; ++i) {
        s.stddev[i] = std::sqrt(s.stddev[i] / static_cast<double>(rows.size()));
        if (s.stddev[i] < 1e-12) s.stddev[i] = 1.0;
    }
    return s;
}

// Support vectors are stored in standardized feature space; queries go
// through the stored standardization before kernel evaluation.
struct SvmModel {
    KernelSpec kernel;
    double C = 1.0;
    double bias = 0.0;
    Standardization standardization;
    std::vector<std::vector<double>> support_x;
    std::vector<double> alpha; // > 0, <= C
    std::vector<double> label; // +-1
};

inline double svm_decision_standardized(const SvmModel& model, const std::vector<double>& xs) {
    double f = model.bias;
    for (std::size_t i = 0; i < model.support_x.size(); ++i)
        f += model.alpha[i] * model.label[i] * kernel_eval(model.kernel, model.support_x[i], xs);
    return f;
}

inline double svm_decision(const SvmModel& model, const std::vector<double>& x) {
    return svm_decision_standardized(model, model.standardization.apply(x));
}

// W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij.
inline double dual_objective(const std::vector<double>& alpha, const std::vector<double>& label,
                             const std::vector<std::vector<double>>& kernel_matrix) {
    const std::size_t n = alpha.size();
    double linear = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] == 0.0) {
            continue;
        }
        linear += alpha[i];
        for (std::size_t j = 0; j < n; ++j) {
            if (alpha[j] == 0.0) continue;
            quad += alpha[i] * alpha[j] * label[i] * label[j] * kernel_matrix[i][j];
        }
    }
    return linear - 0.5 * quad;
}

struct SvmTrainConfig {
    double C = 1.0;
    KernelSpec kernel{KernelSpec::Kind::rbf, 0.0};
    double tol = 1e-3;
    int max_passes = 10;
    std::uint64_t seed = 1;
};

struct SvmTrainResult {
    SvmModel model;
    std::vector<double> dual_trace; // dual objective after each sweep (one more entry if the finishing stage stepped)
    std::vector<double> alpha;      // full multiplier vector, training order
    int sweeps = 0;
};

namespace detail {

class KernelCache {
public:
    KernelCache(const KernelSpec& kernel, const std::vector<std::vector<double>>& x)
        : kernel_(kernel), x_(x), n_(x.size()) {
        // Full matrix up to ~32 MB; larger problems fall back to on-the-fly rows.
        if (n_ <= 2048) {
            full_.resize(n_ * n_);
            for (std::size_t i = 0; i < n_; ++i)
                for (std::size_t j = 0; j <= i; ++j) {
                    const double k = kernel_eval(kernel_, x_[i], x_[j]);
                    full_[i * n_ + j] = k;
                    full_[j * n_ + i] = k;
                }
        }
    }

    double at(std::size_t i, std::size_t j) const {
        if (!full_.empty()) return full_[i * n_ + j];
        return kernel_eval(kernel_, x_[i], x_[j]);
    }

private:
    KernelSpec kernel_;
    const std::vector<std::vector<double>>& x_;
    std::size_t n_;
    std::vector<double> full_;
};

} // namespace detail

// Sequential minimal optimization (Platt's two-multiplier analytic step).
// Sweeps run over a seeded shuffle of the indices; the partner index
// maximizes |E1 - E2| with a shuffled linear scan as fallback. Sweeping ends
// on a violation-free sweep or after max_passes consecutive sweeps without
// an update; a finishing stage then steps the extreme pair until the
// optimality gap is within tol and centers the bias, so the KKT conditions
// hold within tol for every training point on exit.
inline SvmTrainResult train_svm(const std::vector<std::vector<double>>& features,
                                const std::vector<int>& labels, const SvmTrainConfig& cfg) {
    const std::size_t n = features.size();
    if (n < 2 || labels.size() != n) throw ValidationError("svm: need at least two labeled examples");
    if (!(cfg.C > 0.0)) throw ValidationError("svm: C must be > 0");
    if (!(cfg.tol > 0.0)) throw ValidationError("svm: tol must be > 0");
    if (cfg.max_passes < 1) throw ValidationError("svm: max_passes must be >= 1");
    const std::size_t dim = features[0].size();
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (features[i].size() != dim) throw ValidationError("svm: ragged feature matrix");
        for (double v : features[i])
            if (!std::isfinite(v)) throw ValidationError("svm: non-finite feature value");
        if (labels[i] == 1) has_pos = true;
        else if (labels[i] == -1) has_neg = true;
        else throw ValidationError("svm: labels must be +1 or -1");
    }
    if (!has_pos || !has_neg) throw ValidationError("svm: training data contains a single class");

    SvmTrainResult result;
    SvmModel& model = result.model;
    model.kernel = cfg.kernel;
    if (model.kernel.kind == KernelSpec::Kind::rbf && model.kernel.gamma <= 0.0)
        model.kernel.gamma = 1.0 / static_cast<double>(dim);
    model.C = cfg.C;
    model.standardization = fit_standardization(features);

    std::vector<std::vector<double>> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = model.standardization.apply(features[i]);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<double>(labels[i]);

    const detail::KernelCache K(model.kernel, x);
    const double C = cfg.C;
    std::vector<double> alpha(n, 0.0);
    double b = 0.0;
    std::vector<double> E(n);
    for (std::size_t i = 0; i < n; ++i) E[i] = -y[i]; // f == 0 at the start

    constexpr double kStepEps = 1e-9;
    // step_eps > 0 rejects steps that are negligible relative to the current
    // multipliers (sweep phase); 0 accepts any nonzero move (finishing phase,
    // where microscopic moves still land multipliers exactly on a bound).
    auto take_step = [&](std::size_t i1, std::size_t i2, double step_eps) -> bool {
        if (i1 == i2) return false;
        const double a1 = alpha[i1], a2 = alpha[i2];
        const double y1 = y[i1], y2 = y[i2];
        const double E1 = E[i1], E2 = E[i2];
        const double s = y1 * y2;
        double L, H;
        if (y1 != y2) {
            L = std::max(0.0, a2 - a1);
            H = std::min(C, C + a2 - a1);
        } else {
            L = std::max(0.0, a1 + a2 - C);
            H = std::min(C, a1 + a2);
        }
        if (L >= H) return false;
        const double k11 = K.at(i1, i1), k12 = K.at(i1, i2), k22 = K.at(i2, i2);
        const double eta = k11 + k22 - 2.0 * k12;
        double a2_new;
        if (eta > 0.0) {
            a2_new = a2 + y2 * (E1 - E2) / eta;
            a2_new = std::clamp(a2_new, L, H);
        } else {
            // Non-positive curvature: pick the better interval endpoint.
            const double f1 = y1 * (E1 + b) - a1 * k11 - s * a2 * k12;
            const double f2 = y2 * (E2 + b) - s * a1 * k12 - a2 * k22;
            const double L1 = a1 + s * (a2 - L);
            const double H1 = a1 + s * (a2 - H);
            const double psi_l =
                L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12;
            const double psi_h =
                H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12;
            if (psi_l < psi_h - kStepEps) a2_new = L;
            else if (psi_l > psi_h + kStepEps) a2_new = H;
            else return false;
        }
        // Platt's bound rounding: multipliers within arithmetic noise of a
        // bound are set exactly on it, so bound membership stays meaningful
        // (a stray 1e-19 residue would otherwise count as a free multiplier).
        const double snap = 1e-12 * C;
        if (a2_new < snap) a2_new = 0.0;
        else if (a2_new > C - snap) a2_new = C;
        if (a2_new == a2) return false;
        if (std::abs(a2_new - a2) < step_eps * (a2_new + a2 + step_eps)) return false;
        double a1_new = a1 + s * (a2 - a2_new);
        if (a1_new < snap) a1_new = 0.0;
        else if (a1_new > C - snap) a1_new = C;

        const double d1 = y1 * (a1_new - a1);
        const double d2 = y2 * (a2_new - a2);
        const double b1 = b - E1 - d1 * k11 - d2 * k12;
        const double b2 = b - E2 - d1 * k12 - d2 * k22;
        double b_new;
        if (a1_new > 0.0 && a1_new < C) b_new = b1;
        else if (a2_new > 0.0 && a2_new < C) b_new = b2;
        else b_new = 0.5 * (b1 + b2);

        for (std::size_t k = 0; k < n; ++k)
            E[k] += d1 * K.at(i1, k) + d2 * K.at(i2, k) + (b_new - b);
        alpha[i1] = a1_new;
        alpha[i2] = a2_new;
        b = b_new;
        return true;
    };

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto kernel_matrix_rows = [&]() {
        std::vector<std::vector<double>> rows(n, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) rows[i][j] = K.at(i, j);
        return rows;
    };
    const std::vector<std::vector<double>> kmat = kernel_matrix_rows();

    int quiet_sweeps = 0;
    const int max_sweeps = 10000;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        rng.shuffle(order);
        std::size_t changed = 0, violations = 0;
        for (std::size_t idx = 0; idx < n; ++idx) {
            const std::size_t i1 = order[idx];
            const double r1 = E[i1] * y[i1];
            const bool violates = (r1 < -cfg.tol && alpha[i1] < C) || (r1 > cfg.tol && alpha[i1] > 0.0);
            if (!violates) continue;
            ++violations;
            // Partner with the largest |E1 - E2|.
            std::size_t best = i1;
            double best_gap = -1.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i1) continue;
                const double gap = std::abs(E[i1] - E[j]);
                if (gap > best_gap) {
                    best_gap = gap;
                    best = j;
                }
            }
            if (best != i1 && take_step(i1, best, kStepEps)) {
                ++changed;
                continue;
            }
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t i2 = order[(idx + 1 + j) % n];
                if (i2 == i1) continue;
                if (take_step(i1, i2, kStepEps)) {
                    ++changed;
                    break;
                }
            }
        }
        result.dual_trace.push_back(dual_objective(alpha, y, kmat));
        result.sweeps = sweep + 1;
        if (violations == 0) break;
        quiet_sweeps = changed == 0 ? quiet_sweeps + 1 : 0;
        if (quiet_sweeps >= cfg.max_passes) break;
    }

    // The sweeps can stall with residual violations when the bias sits
    // off-center and no pairwise step clears the per-point test (typically:
    // no free multipliers left to pin b). Optimality is bias-independent,
    // though: with g_i = f_i - b, every point with room to move up
    // (alpha < C on the +1 side, alpha > 0 on the -1 side) demands
    // b >= y_i - g_i - tol, and every point with room to move down demands
    // b <= y_i - g_i + tol. In E terms that interval is
    // [b - E_up_min, b - E_low_max], so gap = E_low_max - E_up_min decides
    // feasibility: once gap <= tol, placing b mid-interval leaves every
    // point within tol/2. Drive the gap down with steps on the extreme
    // ("maximal violating") pair, which always has L < H and positive room
    // in the step direction, then recenter.
    const auto extremes = [&]() {
        struct Ext {
            std::size_t up = 0, low = 0;
            double e_up = 0.0, e_low = 0.0;
            bool have_up = false, have_low = false;
        } ext;
        for (std::size_t i = 0; i < n; ++i) {
            const bool room_up = y[i] > 0.0 ? alpha[i] < C : alpha[i] > 0.0;
            const bool room_down = y[i] > 0.0 ? alpha[i] > 0.0 : alpha[i] < C;
            if (room_up && (!ext.have_up || E[i] < ext.e_up)) {
                ext.up = i;
                ext.e_up = E[i];
                ext.have_up = true;
            }
            if (room_down && (!ext.have_low || E[i] > ext.e_low)) {
                ext.low = i;
                ext.e_low = E[i];
                ext.have_low = true;
            }
        }
        return ext;
    };

    // Both classes are present and sum(alpha_i y_i) == 0 throughout, so
    // neither side can empty out; the checks are pure defence.
    const std::size_t finish_cap = std::max<std::size_t>(1000, 64 * n);
    bool finished_steps = false;
    for (std::size_t it = 0; it < finish_cap; ++it) {
        const auto ext = extremes();
        if (!ext.have_up || !ext.have_low) break;
        if (ext.e_low - ext.e_up <= cfg.tol) break;
        if (!take_step(ext.up, ext.low, 0.0)) break;
        finished_steps = true;
    }
    if (finished_steps) result.dual_trace.push_back(dual_objective(alpha, y, kmat));
    {
        const auto ext = extremes();
        if (ext.have_up && ext.have_low) {
            const double shift = -0.5 * (ext.e_up + ext.e_low);
            b += shift;
            for (std::size_t k = 0; k < n; ++k) E[k] += shift;
        }
    }

    model.bias = b;
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 0.0) {
            model.support_x.push_back(x[i]);
            model.alpha.push_back(alpha[i]);
            model.label.push_back(y[i]);
        }
    }
    result.alpha = std::move(alpha);
    return result;
}

// KKT satisfaction at tolerance `tol` for every training point, using the
// trained model's decision function. Returns the worst violation margin
// (<= 0 means fully satisfied).
inline double svm_kkt_worst_violation(const SvmTrainResult& trained,
                                      const std::vector<std::vector<double>>& features,
                                      const std::vector<int>& labels) {
    double worst = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double yf = labels[i] * svm_decision(trained.model, features[i]);
        const double a = trained.alpha[i];
        const double C = trained.model.C;
        double violation = 0.0;
        if (a <= 0.0) violation = 1.0 - yf;            // want yf >= 1
        else if (a >= C) violation = yf - 1.0;         // want yf <= 1
        else violation = std::abs(yf - 1.0);           // want yf == 1
        worst = std::max(worst, violation);
    }
    return worst;
}

inline void save_svm(const SvmModel& model, const std::string& path) {
    std::string out;
    out += "{\n";
    out += "  \"format_version\": " + std::to_string(kSvmModelVersion) + ",\n";
    out += "  \"kind\": \"svm\",\n";
    out += std::string("  \"kernel\": {\"kind\": \"") + model.kernel.name() + "\"";
    if (model.kernel.kind == KernelSpec::Kind::rbf)
        out += ", \"gamma\": " + format_double_17(model.kernel.gamma);
    out += "},\n";
    out += "  \"C\": " + format_double_17(model.C) + ",\n";
    out += "  \"bias\": " + format_double_17(model.bias) + ",\n";
    auto number_list = [](const std::vector<double>& v) {
        std::string s = "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ", ";
            s += format_double_17(v[i]);
        }
        return s + "]";
    };
    out += "  \"standardization\": {\"mean\": " + number_list(model.standardization.mean) +
           ", \"std\": " + number_list(model.standardization.stddev) + "},\n";
    out += "  \"support\": [\n";
    for (std::size_t i = 0; i < model.support_x.size(); ++i) {
        out += "    {\"alpha_y\": " + format_double_17(model.alpha[i] * model.label[i]) +
               ", \"x\": " + number_list(model.support_x[i]) + "}";
        out += i + 1 < model.support_x.size() ? ",\n" : "\n";
    }
    out += "  ]\n}\n";

    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("svm: cannot open '" + path + "' for writing");
    f << out;
    if (!f) throw Error("svm: write failure on '" + path + "'");
}

inline SvmModel load_svm(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("svm: cannot open '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("svm: parse error in '" + path + "': " + e.what());
    }
    if (!j.contains("kind") || j.at("kind").get<std::string>() != "svm")
        throw Error("svm: '" + path + "' is not an svm model file");
    if (j.at("format_version").get<int>() != kSvmModelVersion)
        throw Error("svm: unsupported model format version in '" + path + "'");
    SvmModel m;
    const auto& jk = j.at("kernel");
    m.kernel = KernelSpec::parse(jk.at("kind").get<std::string>(),
                                 jk.contains("gamma") ? jk.at("gamma").get<double>() : 0.0);
    m.C = j.at("C").get<double>();
    m.bias = j.at("bias").get<double>();
    m.standardization.mean = j.at("standardization").at("mean").get<std::vector<double>>();
    m.standardization.stddev = j.at("standardization").at("std").get<std::vector<double>>();
    for (const auto& sv : j.at("support")) {
        const double alpha_y = sv.at("alpha_y").get<double>();
        m.support_x.push_back(sv.at("x").get<std::vector<double>>());
        m.alpha.push_back(std::abs(alpha_y));
        m.label.push_back(alpha_y >= 0.0 ? 1.0 : -1.0);
    }
    return m;
}

} // namespace wsipipe
