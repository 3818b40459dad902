#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mnet/dataset.hpp"
#include "mnet/features.hpp"
#include "mnet/matrix.hpp"
#include "mnet/nn.hpp"
#include "mnet/timetable.hpp"

namespace mnet {

/// Pearson correlation, population convention. Both inputs need nonzero
/// variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Coefficient of determination 1 - SS_res/SS_tot with SS_tot about the
/// mean of `actual`.
double r_squared(std::span<const double> pred, std::span<const double> actual);

/// Baseline forecast repeating the anchor-time observation of each target
/// column over all horizons. `target_pos_in_input` maps each target column
/// to its position among the window's input columns; a negative position
/// means the column is absent and raises an error.
Matrix persistence_forecast(const WindowItem& item, const std::vector<int>& target_pos_in_input,
                            int t_p);

/// Positions of the window set's target columns inside its input columns,
/// -1 where absent.
std::vector<int> target_positions_in_input(const WindowSet& ws);

/// Per target and horizon metrics in physical units.
struct EvalCell {
    double model_pearson = 0.0;
    double model_r2 = 0.0;
    double pers_pearson = 0.0;
    double pers_r2 = 0.0;
};

struct EvalReport {
    std::vector<std::string> targets;
    int t_p = 0;
    bool has_persistence = false;  // baseline needs the targets among the inputs
    std::vector<EvalCell> cells;   // [target * t_p + (horizon-1)]
    size_t n_points = 0;

    const EvalCell& cell(int target, int horizon) const;  // horizon is 1-based
    std::string to_csv() const;                            // rows Hrs 1..t_p, pairs (mnet, pers)
    std::string to_json_text() const;
};

/// Forecasts every test window, maps predictions and targets back to
/// physical units with the scaler, and computes Pearson and R-squared per
/// target per horizon for the model and, when the input window carries the
/// historical targets, for the persistence baseline.
EvalReport evaluate(const LstmParams& model, const WindowSet& test, const Scaler& scaler);

/// Coupled synthetic system: each input column is a stationary AR(1)
/// process with coefficient 0.8 and unit marginal variance; target k at
/// time t is sum_j sum_{l=1..3} coef[k][j*3+l-1] * x_j(t-l) plus Gaussian
/// noise. Columns are named x0.. and y0...
struct SynthConfig {
    int length = 1000;
    int n_inputs = 4;
    int n_targets = 3;
    std::vector<double> coef;  // n_targets x (n_inputs*3), row-major; empty = default pattern
    double noise_std = 0.1;
    uint64_t seed = 0;
    Timestamp start = Timestamp::from_calendar(2014, 1, 0);
    void validate() const;
};

TimeTable generate_synthetic(const SynthConfig& cfg);

/// Deterministic dense coefficient pattern used when cfg.coef is empty.
std::vector<double> default_synth_coefficients(int n_inputs, int n_targets);

/// Closed-form variance of target k's noiseless part under the AR(1)
/// input law (unit marginal variance, lag-h autocovariance 0.8^h).
double synth_signal_variance(const SynthConfig& cfg, int target);

}  // namespace mnet
