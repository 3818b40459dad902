#include "mnet/features.hpp"

#include <cmath>
#include <numbers>

#include <json.hpp>

#include "mnet/error.hpp"

namespace mnet {

namespace {
constexpr double kTau = 2.0 * std::numbers::pi;
}

const std::array<std::string, 6> kCalendarColumns = {"year_sin", "year_cos", "doy_sin",
                                                     "doy_cos",  "hour_sin", "hour_cos"};

CalendarSignals calendar_signals(Timestamp ts) {
    int year_phase = (ts.year() - 2000) % 11;
    if (year_phase < 0) year_phase += 11;
    double yp = kTau * static_cast<double>(year_phase) / 11.0;
    double dp = kTau * static_cast<double>(ts.day_of_year() - 1) / 365.0;
    double hp = kTau * static_cast<double>(ts.hour_of_day()) / 24.0;
    return CalendarSignals{std::sin(yp), std::cos(yp), std::sin(dp),
                           std::cos(dp), std::sin(hp), std::cos(hp)};
}

TimeTable add_calendar_columns(const TimeTable& t) {
    TimeTable out = t;
    std::array<Column, 6> cols;
    for (size_t i = 0; i < 6; ++i) {
        cols[i].name = kCalendarColumns[i];
        cols[i].values.reserve(t.rows());
        cols[i].missing.assign(t.rows(), 0);
    }
    for (const auto& ts : t.timestamps()) {
        CalendarSignals s = calendar_signals(ts);
        cols[0].values.push_back(s.year_sin);
        cols[1].values.push_back(s.year_cos);
        cols[2].values.push_back(s.doy_sin);
        cols[3].values.push_back(s.doy_cos);
        cols[4].values.push_back(s.hour_sin);
        cols[5].values.push_back(s.hour_cos);
    }
    for (auto& c : cols) out.add_column(std::move(c));
    return out;
}

int Scaler::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return -1;
}

const ScalerColumn& Scaler::column(const std::string& name) const {
    int i = column_index(name);
    if (i < 0) throw Error("scaler has no column '" + name + "'");
    return columns[static_cast<size_t>(i)];
}

std::string Scaler::to_json_text() const {
    nlohmann::json j;
    j["columns"] = nlohmann::json::array();
    for (const auto& c : columns)
        j["columns"].push_back({{"name", c.name}, {"mean", c.mean}, {"std", c.stdev}});
    j["fitted_range"] = {fit_start.epoch_hour(), fit_end.epoch_hour()};
    return j.dump();
}

Scaler Scaler::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    Scaler s;
    for (const auto& c : j.at("columns"))
        s.columns.push_back({c.at("name").get<std::string>(), c.at("mean").get<double>(),
                             c.at("std").get<double>()});
    s.fit_start = Timestamp::from_epoch_hour(j.at("fitted_range").at(0).get<int64_t>());
    s.fit_end = Timestamp::from_epoch_hour(j.at("fitted_range").at(1).get<int64_t>());
    for (const auto& c : s.columns)
        if (!(c.stdev > 0.0)) throw Error("scaler column '" + c.name + "' has non-positive std");
    return s;
}

Scaler fit_scaler(const TimeTable& t, const std::vector<std::string>& columns, Timestamp start,
                  Timestamp end) {
    if (end < start) throw Error("fit_scaler: empty timestamp range");
    Scaler s;
    s.fit_start = start;
    s.fit_end = end;
    for (const auto& name : columns) {
        const Column& col = t.column(name);
        double sum = 0.0;
        size_t n = 0;
        for (size_t r = 0; r < t.rows(); ++r) {
            if (t.timestamps()[r] < start || end < t.timestamps()[r]) continue;
            if (col.missing[r]) continue;
            sum += col.values[r];
            ++n;
        }
        if (n < 2)
            throw Error("fit_scaler: column '" + name + "' has fewer than 2 values in range");
        double mean = sum / static_cast<double>(n);
        double sq = 0.0;
        for (size_t r = 0; r < t.rows(); ++r) {
            if (t.timestamps()[r] < start || end < t.timestamps()[r]) continue;
            if (col.missing[r]) continue;
            double d = col.values[r] - mean;
            sq += d * d;
        }
        double stdev = std::sqrt(sq / static_cast<double>(n));
        if (!(stdev > 0.0)) throw Error("fit_scaler: column '" + name + "' has zero variance");
        s.columns.push_back({name, mean, stdev});
    }
    return s;
}

namespace {

TimeTable apply_affine(const TimeTable& t, const Scaler& s, bool forward) {
    TimeTable out = t;
    for (const auto& sc : s.columns) {
        if (!out.has_column(sc.name)) throw Error("table has no column '" + sc.name + "'");
        Column& col = out.column(sc.name);
        for (size_t r = 0; r < col.values.size(); ++r) {
            if (col.missing[r]) continue;
            col.values[r] = forward ? (col.values[r] - sc.mean) / sc.stdev
                                    : col.values[r] * sc.stdev + sc.mean;
        }
    }
    return out;
}

}  // namespace

TimeTable standardize(const TimeTable& t, const Scaler& s) { return apply_affine(t, s, true); }

TimeTable destandardize(const TimeTable& t, const Scaler& s) { return apply_affine(t, s, false); }

}  // namespace mnet
