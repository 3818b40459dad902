#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mnet/timetable.hpp"

namespace mnet {

/// Maps one data field of a columnar line to a named output column.
/// `position` is 0-based over the fields that follow the leading
/// (year, day-of-year, hour) triple. Any field equal to one of
/// `sentinels` is recorded as missing.
struct ColumnSpec {
    int position = 0;
    std::string name;
    std::vector<double> sentinels;
};

struct ColumnMap {
    std::vector<ColumnSpec> columns;

    /// JSON array of {"position": int, "name": str, "sentinels": [num...]}.
    static ColumnMap from_json_text(const std::string& text);
    static ColumnMap from_json_file(const std::string& path);
    void validate() const;  // unique names, non-negative positions
};

/// Parses whitespace-delimited hourly text whose lines start with
/// year, day-of-year (1-based), hour-of-day. Rows are sorted by timestamp
/// and deduplicated, last occurrence wins; duplicates with conflicting
/// values produce a warning. Malformed numeric fields raise ParseError
/// with the line number.
TimeTable parse_columnar(std::istream& in, const ColumnMap& map,
                         std::vector<std::string>* warnings = nullptr);

/// Parses derived radar series: `year doy hour minute cpp pcr` per line at
/// 5-minute cadence. The value 9999.9 marks a missing cpp or pcr cell.
TimeTable parse_superdarn(std::istream& in, std::vector<std::string>* warnings = nullptr);

/// Averages sub-hourly rows into hours, binning on [H:00, H+1:00). A cell
/// is produced only when at least half of the expected samples for the
/// hour are present; hours with no rows at all are omitted. The input
/// cadence is inferred from the timestamp deltas and must divide one hour.
TimeTable resample_hourly(const TimeTable& t);

/// Joins tables on the intersection of their timestamp sets and
/// concatenates their columns. Column names must be disjoint.
TimeTable align(const std::vector<TimeTable>& tables);

}  // namespace mnet
