#include "mnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>

#include "mnet/error.hpp"
#include "mnet/features.hpp"

namespace mnet {

namespace {

const std::vector<std::string> kSolarWind = {"v", "n", "bx", "by", "bz"};
const std::vector<std::string> kIndices = {"ae", "au", "al", "dst", "f107", "kp"};
const std::vector<std::string> kSuperdarn = {"cpp", "pcr"};

std::vector<std::string> concat(std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

}  // namespace

FeatureSpec FeatureSpec::make(FeaturePreset preset) {
    std::vector<std::string> calendar(kCalendarColumns.begin(), kCalendarColumns.end());
    FeatureSpec f;
    f.preset = preset;
    f.target_columns = kIndices;
    switch (preset) {
        case FeaturePreset::base:
            f.input_columns = concat({kSolarWind, kIndices, calendar});
            break;
        case FeaturePreset::sdrn:
            f.input_columns = concat({kSolarWind, kSuperdarn, calendar});
            break;
        case FeaturePreset::sw:
            f.input_columns = concat({kSolarWind, calendar});
            break;
        case FeaturePreset::custom:
            throw Error("custom feature spec needs explicit column lists");
    }
    f.validate();
    return f;
}

FeatureSpec FeatureSpec::custom(std::vector<std::string> inputs, std::vector<std::string> targets) {
    FeatureSpec f;
    f.preset = FeaturePreset::custom;
    f.input_columns = std::move(inputs);
    f.target_columns = std::move(targets);
    f.validate();
    return f;
}

void FeatureSpec::validate() const {
    if (input_columns.empty()) throw Error("feature spec: no input columns");
    if (target_columns.empty()) throw Error("feature spec: no target columns");
    std::set<std::string> seen;
    for (const auto& c : input_columns)
        if (!seen.insert(c).second) throw Error("feature spec: duplicate input column '" + c + "'");
    seen.clear();
    for (const auto& c : target_columns)
        if (!seen.insert(c).second)
            throw Error("feature spec: duplicate target column '" + c + "'");
}

FeaturePreset preset_from_string(const std::string& s) {
    if (s == "base") return FeaturePreset::base;
    if (s == "sdrn") return FeaturePreset::sdrn;
    if (s == "sw") return FeaturePreset::sw;
    if (s == "custom") return FeaturePreset::custom;
    throw Error("unknown feature preset '" + s + "'");
}

std::string preset_to_string(FeaturePreset p) {
    switch (p) {
        case FeaturePreset::base: return "base";
        case FeaturePreset::sdrn: return "sdrn";
        case FeaturePreset::sw: return "sw";
        case FeaturePreset::custom: return "custom";
    }
    return "custom";
}

void WindowConfig::validate() const {
    if (t_h < 0) throw Error("window config: t_h must be >= 0");
    if (t_p < 1) throw Error("window config: t_p must be >= 1");
}

void SplitSpec::validate() const {
    for (double f : {train, val, test})
        if (!(f > 0.0 && f < 1.0)) throw Error("split fractions must lie in (0, 1)");
    if (std::abs(train + val + test - 1.0) > 1e-12) throw Error("split fractions must sum to 1");
}

std::array<size_t, 3> split_sizes(size_t n, const SplitSpec& s) {
    s.validate();
    auto rounded = [n](double f) {
        return static_cast<size_t>(std::llround(static_cast<double>(n) * f));
    };
    size_t n_val = rounded(s.val);
    size_t n_test = rounded(s.test);
    if (n_val + n_test > n) throw Error("split: table too small for the requested fractions");
    size_t n_train = n - n_val - n_test;
    if (n_train == 0 || n_val == 0 || n_test == 0)
        throw Error("split: a partition would be empty");
    return {n_train, n_val, n_test};
}

std::array<TimeTable, 3> sequential_split(const TimeTable& t, const SplitSpec& s) {
    if (t.empty()) throw Error("split: empty table");
    auto sizes = split_sizes(t.rows(), s);
    size_t a = sizes[0];
    size_t b = sizes[0] + sizes[1];
    return {t.slice_rows(0, a), t.slice_rows(a, b), t.slice_rows(b, t.rows())};
}

WindowSet assemble_windows(const TimeTable& t, const FeatureSpec& f, const WindowConfig& w) {
    f.validate();
    w.validate();

    std::vector<const Column*> in_cols, tgt_cols;
    for (const auto& name : f.input_columns) in_cols.push_back(&t.column(name));
    for (const auto& name : f.target_columns) tgt_cols.push_back(&t.column(name));

    WindowSet ws;
    ws.input_columns = f.input_columns;
    ws.target_columns = f.target_columns;
    ws.t_h = w.t_h;
    ws.t_p = w.t_p;

    const auto& ts = t.timestamps();
    const size_t n = ts.size();

    // Hourly contiguity: run_before[i] = consecutive-hour rows ending at i,
    // run_after[i] = consecutive-hour rows starting at i.
    std::vector<int> run_before(n, 0), run_after(n, 0);
    for (size_t i = 1; i < n; ++i)
        if (ts[i].epoch_minute() - ts[i - 1].epoch_minute() == 60)
            run_before[i] = run_before[i - 1] + 1;
    for (size_t i = n; i-- > 1;)
        if (ts[i].epoch_minute() - ts[i - 1].epoch_minute() == 60)
            run_after[i - 1] = run_after[i] + 1;

    for (size_t a = 0; a < n; ++a) {
        if (run_before[a] < w.t_h || run_after[a] < w.t_p) continue;
        const size_t first = a - static_cast<size_t>(w.t_h);
        bool clean = true;
        for (const Column* c : in_cols) {
            for (size_t r = first; r <= a && clean; ++r)
                if (c->missing[r]) clean = false;
            if (!clean) break;
        }
        for (const Column* c : tgt_cols) {
            if (!clean) break;
            for (size_t r = a + 1; r <= a + static_cast<size_t>(w.t_p) && clean; ++r)
                if (c->missing[r]) clean = false;
        }
        if (!clean) continue;

        WindowItem item;
        item.anchor = ts[a];
        item.input = Matrix(w.t_h + 1, static_cast<int>(in_cols.size()));
        for (int r = 0; r <= w.t_h; ++r)
            for (size_t c = 0; c < in_cols.size(); ++c)
                item.input.at(r, static_cast<int>(c)) = in_cols[c]->values[first + static_cast<size_t>(r)];
        item.target = Matrix(w.t_p, static_cast<int>(tgt_cols.size()));
        for (int r = 0; r < w.t_p; ++r)
            for (size_t c = 0; c < tgt_cols.size(); ++c)
                item.target.at(r, static_cast<int>(c)) =
                    tgt_cols[c]->values[a + 1 + static_cast<size_t>(r)];
        ws.items.push_back(std::move(item));
    }
    return ws;
}

std::array<WindowSet, 3> split_then_window(const TimeTable& t, const FeatureSpec& f,
                                           const WindowConfig& w, const SplitSpec& s) {
    auto parts = sequential_split(t, s);
    std::array<WindowSet, 3> out = {assemble_windows(parts[0], f, w),
                                    assemble_windows(parts[1], f, w),
                                    assemble_windows(parts[2], f, w)};
    const char* names[3] = {"train", "val", "test"};
    for (size_t i = 0; i < 3; ++i)
        if (out[i].empty())
            throw Error(std::string("split_then_window: ") + names[i] +
                        " partition yields zero windows");
    return out;
}

void write_windows_csv(const WindowSet& ws, std::ostream& out) {
    out << "anchor_epoch_hour";
    for (int r = 0; r <= ws.t_h; ++r)
        for (const auto& c : ws.input_columns) out << ",in_" << c << "_m" << (ws.t_h - r);
    for (int r = 1; r <= ws.t_p; ++r)
        for (const auto& c : ws.target_columns) out << ",tgt_" << c << "_p" << r;
    out << '\n';
    for (const auto& item : ws.items) {
        out << item.anchor.epoch_hour();
        for (double v : item.input.data()) out << ',' << v;
        for (double v : item.target.data()) out << ',' << v;
        out << '\n';
    }
}

}  // namespace mnet
