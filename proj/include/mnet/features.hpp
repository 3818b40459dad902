#pragma once

#include <array>
#include <string>
#include <vector>

#include "mnet/timetable.hpp"

namespace mnet {

/// Cyclical calendar encodings. Periods: 11 years (solar cycle), 365 days,
/// 24 hours. Each (sin, cos) pair lies on the unit circle.
struct CalendarSignals {
    double year_sin, year_cos;
    double doy_sin, doy_cos;
    double hour_sin, hour_cos;
};

/// Phases: hour 2*pi*h/24, day-of-year 2*pi*(doy-1)/365, and year
/// 2*pi*((year-2000) mod 11)/11 with the mod taken into [0, 11).
/// The 365-day period ignores leap days, so Dec 31 of a leap year wraps.
CalendarSignals calendar_signals(Timestamp ts);

/// Column names used when calendar signals are materialized into a table,
/// in CalendarSignals field order.
extern const std::array<std::string, 6> kCalendarColumns;

/// Returns a copy of `t` extended with the six calendar columns computed
/// from each row's timestamp.
TimeTable add_calendar_columns(const TimeTable& t);

struct ScalerColumn {
    std::string name;
    double mean = 0.0;
    double stdev = 1.0;
};

/// Per-column centering and scaling fitted on one timestamp range.
struct Scaler {
    std::vector<ScalerColumn> columns;
    Timestamp fit_start, fit_end;

    int column_index(const std::string& name) const;  // -1 if absent
    const ScalerColumn& column(const std::string& name) const;

    std::string to_json_text() const;
    static Scaler from_json_text(const std::string& text);
};

/// Mean and population standard deviation (N divisor) of every listed
/// column over its non-missing cells with timestamps in [start, end].
/// A column with fewer than two usable cells or zero variance is an error.
Scaler fit_scaler(const TimeTable& t, const std::vector<std::string>& columns, Timestamp start,
                  Timestamp end);

/// (cell - mean) / std per scaler column; other columns pass through.
/// Missing cells stay missing.
TimeTable standardize(const TimeTable& t, const Scaler& s);

/// Exact inverse of standardize.
TimeTable destandardize(const TimeTable& t, const Scaler& s);

}  // namespace mnet
