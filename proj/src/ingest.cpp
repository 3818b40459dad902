#include "mnet/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mnet/error.hpp"

namespace mnet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(std::move(tok));
    return out;
}

double parse_field(const std::string& s, int line_no, const char* what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError(std::string("malformed ") + what + " field '" + s + "'", line_no);
    return v;
}

int64_t parse_int_field(const std::string& s, int line_no, const char* what) {
    int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw ParseError(std::string("malformed ") + what + " field '" + s + "'", line_no);
    return v;
}

struct RawRow {
    Timestamp ts;
    std::vector<double> values;
    std::vector<uint8_t> missing;
};

std::string describe(Timestamp t) {
    std::ostringstream ss;
    ss << t.year() << "-" << t.day_of_year() << "T" << t.hour_of_day();
    if (t.minute_of_hour() != 0) ss << ":" << t.minute_of_hour();
    return ss.str();
}

/// Shared row machinery: sorts, deduplicates (last input occurrence wins)
/// and assembles the table.
TimeTable rows_to_table(std::vector<RawRow> rows, const std::vector<std::string>& names,
                        std::vector<std::string>* warnings) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) { return a.ts < b.ts; });
    std::vector<const RawRow*> kept;
    kept.reserve(rows.size());
    for (size_t i = 0; i < rows.size();) {
        size_t j = i;
        while (j + 1 < rows.size() && rows[j + 1].ts == rows[i].ts) ++j;
        if (j > i && warnings) {
            bool conflict = false;
            for (size_t k = i; k < j; ++k) {
                if (rows[k].missing != rows[j].missing) conflict = true;
                for (size_t c = 0; c < rows[k].values.size() && !conflict; ++c)
                    if (!rows[j].missing[c] && !rows[k].missing[c] &&
                        rows[k].values[c] != rows[j].values[c])
                        conflict = true;
            }
            if (conflict)
                warnings->push_back("duplicate timestamp " + describe(rows[i].ts) +
                                    " with conflicting values, last occurrence kept");
        }
        kept.push_back(&rows[j]);
        i = j + 1;
    }

    std::vector<Timestamp> ts;
    ts.reserve(kept.size());
    std::vector<Column> cols(names.size());
    for (size_t c = 0; c < names.size(); ++c) {
        cols[c].name = names[c];
        cols[c].values.reserve(kept.size());
        cols[c].missing.reserve(kept.size());
    }
    for (const RawRow* r : kept) {
        ts.push_back(r->ts);
        for (size_t c = 0; c < names.size(); ++c) {
            cols[c].values.push_back(r->values[c]);
            cols[c].missing.push_back(r->missing[c]);
        }
    }
    return TimeTable(std::move(ts), std::move(cols));
}

}  // namespace

void ColumnMap::validate() const {
    std::set<std::string> names;
    for (const auto& c : columns) {
        if (c.position < 0) throw Error("column map: negative position for '" + c.name + "'");
        if (c.name.empty()) throw Error("column map: empty column name");
        if (!names.insert(c.name).second)
            throw Error("column map: duplicate column name '" + c.name + "'");
    }
}

ColumnMap ColumnMap::from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (!j.is_array()) throw Error("column map: top-level JSON array expected");
    ColumnMap map;
    for (const auto& e : j) {
        ColumnSpec spec;
        spec.position = e.at("position").get<int>();
        spec.name = e.at("name").get<std::string>();
        if (e.contains("sentinels"))
            for (const auto& s : e.at("sentinels")) spec.sentinels.push_back(s.get<double>());
        map.columns.push_back(std::move(spec));
    }
    map.validate();
    return map;
}

ColumnMap ColumnMap::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

TimeTable parse_columnar(std::istream& in, const ColumnMap& map,
                         std::vector<std::string>* warnings) {
    map.validate();
    std::vector<std::string> names;
    names.reserve(map.columns.size());
    for (const auto& c : map.columns) names.push_back(c.name);

    std::vector<RawRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_ws(line);
        if (fields.empty()) continue;
        if (fields.size() < 3)
            throw ParseError("expected at least year, day-of-year and hour fields", line_no);
        int year = static_cast<int>(parse_int_field(fields[0], line_no, "year"));
        int doy = static_cast<int>(parse_int_field(fields[1], line_no, "day-of-year"));
        int hour = static_cast<int>(parse_int_field(fields[2], line_no, "hour"));
        Timestamp ts;
        try {
            ts = Timestamp::from_calendar(year, doy, hour);
        } catch (const Error& e) {
            throw ParseError(e.what(), line_no);
        }
        RawRow row;
        row.ts = ts;
        row.values.resize(map.columns.size(), kNaN);
        row.missing.resize(map.columns.size(), 1);
        for (size_t c = 0; c < map.columns.size(); ++c) {
            const auto& spec = map.columns[c];
            size_t field_idx = 3 + static_cast<size_t>(spec.position);
            if (field_idx >= fields.size())
                throw ParseError("no field at data position " + std::to_string(spec.position) +
                                     " for column '" + spec.name + "'",
                                 line_no);
            double v = parse_field(fields[field_idx], line_no, "numeric");
            bool sentinel = false;
            for (double s : spec.sentinels)
                if (v == s) sentinel = true;
            if (!sentinel) {
                row.values[c] = v;
                row.missing[c] = 0;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows_to_table(std::move(rows), names, warnings);
}

TimeTable parse_superdarn(std::istream& in, std::vector<std::string>* warnings) {
    constexpr double kSentinel = 9999.9;
    std::vector<RawRow> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = split_ws(line);
        if (fields.empty()) continue;
        if (fields.size() < 6)
            throw ParseError("expected year doy hour minute cpp pcr", line_no);
        int year = static_cast<int>(parse_int_field(fields[0], line_no, "year"));
        int doy = static_cast<int>(parse_int_field(fields[1], line_no, "day-of-year"));
        int hour = static_cast<int>(parse_int_field(fields[2], line_no, "hour"));
        int minute = static_cast<int>(parse_int_field(fields[3], line_no, "minute"));
        Timestamp ts;
        try {
            ts = Timestamp::from_calendar(year, doy, hour, minute);
        } catch (const Error& e) {
            throw ParseError(e.what(), line_no);
        }
        RawRow row;
        row.ts = ts;
        row.values.assign(2, kNaN);
        row.missing.assign(2, 1);
        for (size_t c = 0; c < 2; ++c) {
            double v = parse_field(fields[4 + c], line_no, "numeric");
            if (v != kSentinel) {
                row.values[c] = v;
                row.missing[c] = 0;
            }
        }
        rows.push_back(std::move(row));
    }
    return rows_to_table(std::move(rows), {"cpp", "pcr"}, warnings);
}

TimeTable resample_hourly(const TimeTable& t) {
    if (t.empty()) {
        std::vector<Column> cols;
        for (const auto& c : t.columns()) cols.push_back({c.name, {}, {}});
        return TimeTable({}, std::move(cols));
    }

    int64_t cadence = 60;
    const auto& ts = t.timestamps();
    for (size_t i = 1; i < ts.size(); ++i)
        cadence = std::gcd(cadence, ts[i].epoch_minute() - ts[i - 1].epoch_minute());
    const int64_t expected = 60 / cadence;

    std::vector<Timestamp> out_ts;
    std::vector<Column> out_cols(t.n_columns());
    for (size_t c = 0; c < t.n_columns(); ++c) out_cols[c].name = t.columns()[c].name;

    size_t i = 0;
    while (i < ts.size()) {
        int64_t hour = ts[i].epoch_minute() / 60;
        size_t j = i;
        while (j < ts.size() && ts[j].epoch_minute() / 60 == hour) ++j;
        out_ts.push_back(Timestamp::from_epoch_hour(hour));
        for (size_t c = 0; c < t.n_columns(); ++c) {
            const auto& col = t.columns()[c];
            double sum = 0.0;
            int64_t present = 0;
            for (size_t r = i; r < j; ++r) {
                if (col.missing[r]) continue;
                sum += col.values[r];
                ++present;
            }
            if (2 * present < expected) {
                out_cols[c].values.push_back(kNaN);
                out_cols[c].missing.push_back(1);
            } else {
                out_cols[c].values.push_back(sum / static_cast<double>(present));
                out_cols[c].missing.push_back(0);
            }
        }
        i = j;
    }
    return TimeTable(std::move(out_ts), std::move(out_cols));
}

TimeTable align(const std::vector<TimeTable>& tables) {
    if (tables.empty()) return TimeTable();
    std::set<std::string> names;
    for (const auto& t : tables)
        for (const auto& c : t.columns())
            if (!names.insert(c.name).second)
                throw Error("align: duplicate column name '" + c.name + "'");

    std::vector<Timestamp> common = tables[0].timestamps();
    for (size_t i = 1; i < tables.size(); ++i) {
        const auto& other = tables[i].timestamps();
        std::vector<Timestamp> next;
        std::set_intersection(common.begin(), common.end(), other.begin(), other.end(),
                              std::back_inserter(next));
        common = std::move(next);
    }

    std::vector<Column> cols;
    for (const auto& t : tables) {
        std::vector<size_t> rows;
        rows.reserve(common.size());
        for (const auto& ts : common) rows.push_back(*t.row_at(ts));
        for (const auto& c : t.columns()) {
            Column out;
            out.name = c.name;
            out.values.reserve(common.size());
            out.missing.reserve(common.size());
            for (size_t r : rows) {
                out.values.push_back(c.values[r]);
                out.missing.push_back(c.missing[r]);
            }
            cols.push_back(std::move(out));
        }
    }
    return TimeTable(std::move(common), std::move(cols));
}

}  // namespace mnet
