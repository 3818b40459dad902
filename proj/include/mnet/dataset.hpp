#pragma once

#include <array>
#include <string>
#include <vector>

#include "mnet/matrix.hpp"
#include "mnet/timetable.hpp"

namespace mnet {

enum class FeaturePreset { base, sdrn, sw, custom };

/// Input and target column selection. Presets:
///   base: solar wind + historical indices + calendar
///   sdrn: solar wind + cpp/pcr + calendar
///   sw:   solar wind + calendar
/// Targets default to the six indices ae, au, al, dst, f107, kp.
struct FeatureSpec {
    std::vector<std::string> input_columns;
    std::vector<std::string> target_columns;
    FeaturePreset preset = FeaturePreset::custom;

    static FeatureSpec make(FeaturePreset preset);
    static FeatureSpec custom(std::vector<std::string> inputs, std::vector<std::string> targets);
    void validate() const;
};

FeaturePreset preset_from_string(const std::string& s);
std::string preset_to_string(FeaturePreset p);

/// t_h past samples beyond the anchor (the input window [t-t_h, t] holds
/// t_h+1 samples) and t_p future samples predicted over (t, t+t_p].
struct WindowConfig {
    int t_h = 6;
    int t_p = 6;
    void validate() const;
};

struct WindowItem {
    Timestamp anchor;
    Matrix input;   // (t_h+1) x inputs
    Matrix target;  // t_p x targets
};

/// Sliding windows with no missing cells anywhere, covering consecutive
/// hours, ordered by anchor.
struct WindowSet {
    std::vector<std::string> input_columns;
    std::vector<std::string> target_columns;
    int t_h = 0;
    int t_p = 1;
    std::vector<WindowItem> items;

    size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

/// Causal split fractions; must each lie in (0,1) and sum to 1.
struct SplitSpec {
    double train = 0.6;
    double val = 0.1;
    double test = 0.3;
    void validate() const;
};

/// Partitions rows by position into contiguous train/val/test blocks of
/// sizes round(N*f); the rounding remainder goes to train. Any empty block
/// is an error.
std::array<TimeTable, 3> sequential_split(const TimeTable& t, const SplitSpec& s);

/// Row counts of the three blocks without materializing them.
std::array<size_t, 3> split_sizes(size_t n, const SplitSpec& s);

/// Emits one item per anchor t whose hours t-t_h .. t+t_p are all present
/// in the table with every needed cell non-missing. Values are copied
/// exactly from the table.
WindowSet assemble_windows(const TimeTable& t, const FeatureSpec& f, const WindowConfig& w);

/// sequential_split then assemble_windows per partition. A partition that
/// yields zero windows is an error.
std::array<WindowSet, 3> split_then_window(const TimeTable& t, const FeatureSpec& f,
                                           const WindowConfig& w, const SplitSpec& s);

/// Debug export: anchor, flattened input, flattened target per row.
void write_windows_csv(const WindowSet& ws, std::ostream& out);

}  // namespace mnet
