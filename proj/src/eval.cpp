#include "mnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "mnet/error.hpp"
#include "mnet/optim.hpp"
#include "mnet/rng.hpp"

namespace mnet {

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw Error("pearson: length mismatch");
    const size_t n = a.size();
    if (n < 2) throw Error("pearson: need at least 2 points");
    double mean_a = 0.0, mean_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);
    double cov = 0.0, var_a = 0.0, var_b = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double da = a[i] - mean_a;
        double db = b[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (!(var_a > 0.0) || !(var_b > 0.0))
        throw Error("pearson: undefined for a zero-variance series");
    return cov / std::sqrt(var_a * var_b);
}

double r_squared(std::span<const double> pred, std::span<const double> actual) {
    if (pred.size() != actual.size()) throw Error("r_squared: length mismatch");
    const size_t n = pred.size();
    if (n < 2) throw Error("r_squared: need at least 2 points");
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += actual[i];
    mean /= static_cast<double>(n);
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double r = actual[i] - pred[i];
        double d = actual[i] - mean;
        ss_res += r * r;
        ss_tot += d * d;
    }
    if (!(ss_tot > 0.0)) throw Error("r_squared: undefined for a zero-variance actual series");
    return 1.0 - ss_res / ss_tot;
}

std::vector<int> target_positions_in_input(const WindowSet& ws) {
    std::vector<int> pos;
    pos.reserve(ws.target_columns.size());
    for (const auto& name : ws.target_columns) {
        auto it = std::find(ws.input_columns.begin(), ws.input_columns.end(), name);
        pos.push_back(it == ws.input_columns.end()
                          ? -1
                          : static_cast<int>(it - ws.input_columns.begin()));
    }
    return pos;
}

Matrix persistence_forecast(const WindowItem& item, const std::vector<int>& target_pos_in_input,
                            int t_p) {
    for (int p : target_pos_in_input)
        if (p < 0)
            throw Error(
                "persistence baseline needs the historical target columns in the input "
                "window; use the base feature set");
    const int k = static_cast<int>(target_pos_in_input.size());
    const int anchor_row = item.input.rows() - 1;
    Matrix out(t_p, k);
    for (int h = 0; h < t_p; ++h)
        for (int j = 0; j < k; ++j)
            out.at(h, j) = item.input.at(anchor_row, target_pos_in_input[static_cast<size_t>(j)]);
    return out;
}

const EvalCell& EvalReport::cell(int target, int horizon) const {
    if (target < 0 || target >= static_cast<int>(targets.size()) || horizon < 1 || horizon > t_p)
        throw Error("eval report: cell out of range");
    return cells[static_cast<size_t>(target) * static_cast<size_t>(t_p) +
                 static_cast<size_t>(horizon - 1)];
}

std::string EvalReport::to_csv() const {
    std::ostringstream ss;
    ss << "hrs";
    for (const auto& t : targets) ss << ',' << t << "_mnet," << t << "_pers";
    ss << '\n';
    for (int h = 1; h <= t_p; ++h) {
        ss << h;
        for (size_t k = 0; k < targets.size(); ++k) {
            const EvalCell& c = cell(static_cast<int>(k), h);
            ss << ',' << c.model_pearson << ',';
            if (has_persistence)
                ss << c.pers_pearson;
            else
                ss << "NA";
        }
        ss << '\n';
    }
    return ss.str();
}

std::string EvalReport::to_json_text() const {
    nlohmann::json j;
    j["targets"] = targets;
    j["horizons"] = t_p;
    j["n_points"] = n_points;
    j["has_persistence"] = has_persistence;
    nlohmann::json metrics = nlohmann::json::object();
    for (size_t k = 0; k < targets.size(); ++k) {
        nlohmann::json entry;
        for (const char* key : {"model_pearson", "model_r2", "pers_pearson", "pers_r2"})
            entry[key] = nlohmann::json::array();
        for (int h = 1; h <= t_p; ++h) {
            const EvalCell& c = cell(static_cast<int>(k), h);
            entry["model_pearson"].push_back(c.model_pearson);
            entry["model_r2"].push_back(c.model_r2);
            if (has_persistence) {
                entry["pers_pearson"].push_back(c.pers_pearson);
                entry["pers_r2"].push_back(c.pers_r2);
            }
        }
        if (!has_persistence) {
            entry.erase("pers_pearson");
            entry.erase("pers_r2");
        }
        metrics[targets[k]] = std::move(entry);
    }
    j["metrics"] = std::move(metrics);
    return j.dump(2);
}

EvalReport evaluate(const LstmParams& model, const WindowSet& test, const Scaler& scaler) {
    if (test.empty()) throw Error("evaluate: empty test set");
    const int k_out = static_cast<int>(test.target_columns.size());
    const int t_p = test.t_p;
    if (model.dims.k_out != k_out || model.dims.t_out != t_p ||
        model.dims.d_in != static_cast<int>(test.input_columns.size()))
        throw Error("evaluate: model dims do not match the window set");
    const size_t n = test.size();

    std::vector<int> tpos = target_positions_in_input(test);
    const bool with_pers = std::all_of(tpos.begin(), tpos.end(), [](int p) { return p >= 0; });

    // Per-column affine maps back to physical units; identity for columns
    // the scaler does not cover.
    std::vector<double> mean(static_cast<size_t>(k_out), 0.0), stdev(static_cast<size_t>(k_out), 1.0);
    for (int k = 0; k < k_out; ++k) {
        int idx = scaler.column_index(test.target_columns[static_cast<size_t>(k)]);
        if (idx >= 0) {
            mean[static_cast<size_t>(k)] = scaler.columns[static_cast<size_t>(idx)].mean;
            stdev[static_cast<size_t>(k)] = scaler.columns[static_cast<size_t>(idx)].stdev;
        }
    }

    // series[target][horizon-1]: model prediction, actual, persistence.
    auto series = [&] {
        return std::vector<std::vector<std::vector<double>>>(
            static_cast<size_t>(k_out),
            std::vector<std::vector<double>>(static_cast<size_t>(t_p), std::vector<double>()));
    };
    auto pred_s = series(), actual_s = series(), pers_s = series();

    const int chunk = 256;
    for (size_t start = 0; start < n; start += static_cast<size_t>(chunk)) {
        const size_t end = std::min(n, start + static_cast<size_t>(chunk));
        std::vector<const Matrix*> inputs;
        inputs.reserve(end - start);
        for (size_t i = start; i < end; ++i) inputs.push_back(&test.items[i].input);
        BatchForward bf = forward_batch(inputs, model);
        for (size_t i = start; i < end; ++i) {
            const WindowItem& item = test.items[i];
            const double* pred_row = bf.preds.row(static_cast<int>(i - start));
            for (int h = 0; h < t_p; ++h) {
                for (int k = 0; k < k_out; ++k) {
                    const double m = mean[static_cast<size_t>(k)];
                    const double s = stdev[static_cast<size_t>(k)];
                    pred_s[static_cast<size_t>(k)][static_cast<size_t>(h)].push_back(
                        pred_row[h * k_out + k] * s + m);
                    actual_s[static_cast<size_t>(k)][static_cast<size_t>(h)].push_back(
                        item.target.at(h, k) * s + m);
                    if (with_pers)
                        pers_s[static_cast<size_t>(k)][static_cast<size_t>(h)].push_back(
                            item.input.at(item.input.rows() - 1, tpos[static_cast<size_t>(k)]) * s +
                            m);
                }
            }
        }
    }

    EvalReport report;
    report.targets = test.target_columns;
    report.t_p = t_p;
    report.has_persistence = with_pers;
    report.n_points = n;
    report.cells.resize(static_cast<size_t>(k_out) * static_cast<size_t>(t_p));
    for (int k = 0; k < k_out; ++k) {
        for (int h = 0; h < t_p; ++h) {
            EvalCell c;
            const auto& pr = pred_s[static_cast<size_t>(k)][static_cast<size_t>(h)];
            const auto& ac = actual_s[static_cast<size_t>(k)][static_cast<size_t>(h)];
            c.model_pearson = pearson(pr, ac);
            c.model_r2 = r_squared(pr, ac);
            if (with_pers) {
                const auto& pe = pers_s[static_cast<size_t>(k)][static_cast<size_t>(h)];
                c.pers_pearson = pearson(pe, ac);
                c.pers_r2 = r_squared(pe, ac);
            }
            report.cells[static_cast<size_t>(k) * static_cast<size_t>(t_p) + static_cast<size_t>(h)] = c;
        }
    }
    return report;
}

void SynthConfig::validate() const {
    if (length < 8) throw Error("synthetic: length too short");
    if (n_inputs < 1 || n_targets < 1) throw Error("synthetic: need inputs and targets");
    if (noise_std < 0.0) throw Error("synthetic: noise_std must be >= 0");
    if (!coef.empty() &&
        coef.size() != static_cast<size_t>(n_targets) * static_cast<size_t>(n_inputs) * 3)
        throw Error("synthetic: coefficient matrix must be n_targets x (n_inputs*3)");
}

std::vector<double> default_synth_coefficients(int n_inputs, int n_targets) {
    const double lag_w[3] = {1.0, 0.6, 0.3};
    std::vector<double> coef(static_cast<size_t>(n_targets) * static_cast<size_t>(n_inputs) * 3);
    for (int k = 0; k < n_targets; ++k)
        for (int j = 0; j < n_inputs; ++j) {
            double s = ((j + k) % 3 == 0) ? 1.0 : ((j + k) % 3 == 1 ? -0.7 : 0.4);
            for (int l = 0; l < 3; ++l)
                coef[(static_cast<size_t>(k) * static_cast<size_t>(n_inputs) + static_cast<size_t>(j)) * 3 +
                     static_cast<size_t>(l)] = s * lag_w[l];
        }
    return coef;
}

double synth_signal_variance(const SynthConfig& cfg, int target) {
    cfg.validate();
    const std::vector<double>& coef =
        cfg.coef.empty() ? default_synth_coefficients(cfg.n_inputs, cfg.n_targets) : cfg.coef;
    double var = 0.0;
    for (int j = 0; j < cfg.n_inputs; ++j) {
        const double* c = coef.data() +
                          (static_cast<size_t>(target) * static_cast<size_t>(cfg.n_inputs) +
                           static_cast<size_t>(j)) * 3;
        for (int l = 0; l < 3; ++l)
            for (int m = 0; m < 3; ++m) var += c[l] * c[m] * std::pow(0.8, std::abs(l - m));
    }
    return var;
}

TimeTable generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const std::vector<double>& coef =
        cfg.coef.empty() ? default_synth_coefficients(cfg.n_inputs, cfg.n_targets) : cfg.coef;
    constexpr double phi = 0.8;
    const double innovation_std = std::sqrt(1.0 - phi * phi);  // unit marginal variance
    const int burn = 3;

    Rng rng(cfg.seed);
    // inputs[j][t] for t in [0, burn + length): extra leading rows so every
    // emitted target has its three lags.
    std::vector<std::vector<double>> x(static_cast<size_t>(cfg.n_inputs),
                                       std::vector<double>(static_cast<size_t>(burn + cfg.length)));
    for (int j = 0; j < cfg.n_inputs; ++j) {
        auto& xj = x[static_cast<size_t>(j)];
        xj[0] = rng.normal();  // stationary start
        for (size_t t = 1; t < xj.size(); ++t) xj[t] = phi * xj[t - 1] + innovation_std * rng.normal();
    }

    std::vector<Timestamp> ts;
    ts.reserve(static_cast<size_t>(cfg.length));
    for (int t = 0; t < cfg.length; ++t) ts.push_back(cfg.start.plus_hours(t));

    std::vector<Column> cols;
    for (int j = 0; j < cfg.n_inputs; ++j) {
        Column col;
        col.name = "x" + std::to_string(j);
        col.values.assign(x[static_cast<size_t>(j)].begin() + burn, x[static_cast<size_t>(j)].end());
        col.missing.assign(static_cast<size_t>(cfg.length), 0);
        cols.push_back(std::move(col));
    }
    for (int k = 0; k < cfg.n_targets; ++k) {
        Column col;
        col.name = "y" + std::to_string(k);
        col.missing.assign(static_cast<size_t>(cfg.length), 0);
        col.values.reserve(static_cast<size_t>(cfg.length));
        for (int t = 0; t < cfg.length; ++t) {
            double v = 0.0;
            for (int j = 0; j < cfg.n_inputs; ++j) {
                const double* c = coef.data() +
                                  (static_cast<size_t>(k) * static_cast<size_t>(cfg.n_inputs) +
                                   static_cast<size_t>(j)) * 3;
                for (int l = 1; l <= 3; ++l)
                    v += c[l - 1] * x[static_cast<size_t>(j)][static_cast<size_t>(burn + t - l)];
            }
            v += cfg.noise_std * rng.normal();
            col.values.push_back(v);
        }
        cols.push_back(std::move(col));
    }
    return TimeTable(std::move(ts), std::move(cols));
}

}  // namespace mnet
