#pragma once

#include <array>
#include <string>

#include "mnet/dataset.hpp"
#include "mnet/features.hpp"
#include "mnet/nn.hpp"
#include "mnet/timetable.hpp"

namespace mnet {

/// Windowed train/val/test sets in standardized units plus the scaler that
/// produced them.
struct PreparedData {
    std::array<WindowSet, 3> windows;  // train, val, test
    Scaler scaler;
};

/// Full dataset preparation: optionally extend the table with calendar
/// columns, fit the scaler on the training block of the sequential split
/// (physical feature and target columns only; calendar sinusoids pass
/// through unscaled), standardize, then split and window.
PreparedData prepare_datasets(const TimeTable& table, const FeatureSpec& features,
                              const WindowConfig& window, const SplitSpec& split);

/// Input/target columns of `features` minus the calendar sinusoids.
std::vector<std::string> physical_columns(const FeatureSpec& features);

/// Adds the calendar sinusoid columns when the feature spec references any
/// that the table does not already carry.
TimeTable ensure_calendar_columns(const TimeTable& table, const FeatureSpec& features);

/// Trained model plus everything needed to run it on new data.
struct ModelBundle {
    LstmParams params;
    Scaler scaler;
    FeatureSpec features;
    WindowConfig window;
    uint64_t seed = 0;
    int best_epoch = 0;
    int epochs_run = 0;
};

/// Writes `<base>.bin` (weights) and `<base>.json` (dims, seed, columns,
/// window, scaler, epoch metadata).
void save_model_bundle(const ModelBundle& bundle, const std::string& base_path);
ModelBundle load_model_bundle(const std::string& base_path);

}  // namespace mnet
