#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace mnet {

/// Instant on the shared time axis, stored at minute resolution so that
/// sub-hourly source data (5-minute radar series) and the hourly pipeline
/// use one representation. Hour-aligned instants expose an integer epoch
/// hour; all instants decompose to (year, day-of-year, hour, minute) and
/// the decomposition round-trips exactly. Instants before 1970 are invalid.
class Timestamp {
public:
    Timestamp() = default;

    static Timestamp from_epoch_hour(int64_t hours);
    static Timestamp from_epoch_minute(int64_t minutes);
    /// day_of_year is 1-based; leap years have 366 days.
    static Timestamp from_calendar(int year, int day_of_year, int hour, int minute = 0);

    int64_t epoch_minute() const { return minutes_; }
    /// Throws unless the instant lies exactly on an hour boundary.
    int64_t epoch_hour() const;
    bool hour_aligned() const { return minutes_ % 60 == 0; }

    int year() const;
    int day_of_year() const;
    int hour_of_day() const;
    int minute_of_hour() const;

    Timestamp plus_hours(int64_t h) const { return from_epoch_minute(minutes_ + h * 60); }
    Timestamp plus_minutes(int64_t m) const { return from_epoch_minute(minutes_ + m); }

    auto operator<=>(const Timestamp&) const = default;

private:
    int64_t minutes_ = 0;
};

/// One named series. `missing[i]` marks cells with no observation; the
/// stored value of a missing cell is NaN and must not be read.
struct Column {
    std::string name;
    std::vector<double> values;
    std::vector<uint8_t> missing;
};

/// Timestamp-indexed multivariate series. Timestamps are strictly
/// increasing; gaps are allowed. Every column has one cell per row.
class TimeTable {
public:
    TimeTable() = default;
    TimeTable(std::vector<Timestamp> timestamps, std::vector<Column> columns);

    size_t rows() const { return timestamps_.size(); }
    size_t n_columns() const { return columns_.size(); }
    bool empty() const { return timestamps_.empty(); }

    const std::vector<Timestamp>& timestamps() const { return timestamps_; }
    const std::vector<Column>& columns() const { return columns_; }

    int column_index(const std::string& name) const;  // -1 if absent
    bool has_column(const std::string& name) const { return column_index(name) >= 0; }
    const Column& column(const std::string& name) const;
    Column& column(const std::string& name);

    /// Appends a column of matching length with a fresh name.
    void add_column(Column col);

    /// Row index holding exactly this timestamp, if any.
    std::optional<size_t> row_at(Timestamp t) const;

    /// Copy of rows [begin, end).
    TimeTable slice_rows(size_t begin, size_t end) const;

    /// Equal when timestamps, column names/order, masks, and all
    /// non-missing values match bitwise.
    bool operator==(const TimeTable& other) const;

private:
    std::vector<Timestamp> timestamps_;
    std::vector<Column> columns_;
};

/// Canonical CSV: header `epoch_hour,<col>,...` (or `epoch_minute` when any
/// row is not hour-aligned), literal `NA` for missing cells, shortest
/// round-trip formatting for values. read_csv(write_csv(t)) == t.
void write_csv(const TimeTable& t, std::ostream& out);
std::string to_csv(const TimeTable& t);
TimeTable read_csv(std::istream& in);
TimeTable read_csv_file(const std::string& path);
void write_csv_file(const TimeTable& t, const std::string& path);

}  // namespace mnet
