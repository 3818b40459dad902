#include "mnet/timetable.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "mnet/error.hpp"

namespace mnet {

namespace {

// Civil-calendar day arithmetic (proleptic Gregorian), days relative to
// 1970-01-01.
int64_t days_from_civil(int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& year, unsigned& month, unsigned& day) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t y = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    day = doy - (153 * mp + 2) / 5 + 1;
    month = mp + (mp < 10 ? 3 : -9);
    year = static_cast<int>(y + (month <= 2));
}

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_year(int y) { return is_leap(y) ? 366 : 365; }

int64_t floor_div(int64_t a, int64_t b) {
    int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

Timestamp Timestamp::from_epoch_minute(int64_t minutes) {
    if (minutes < 0) throw Error("timestamp before 1970 is not representable");
    Timestamp t;
    t.minutes_ = minutes;
    return t;
}

Timestamp Timestamp::from_epoch_hour(int64_t hours) { return from_epoch_minute(hours * 60); }

Timestamp Timestamp::from_calendar(int year, int day_of_year, int hour, int minute) {
    if (day_of_year < 1 || day_of_year > days_in_year(year))
        throw Error("day of year " + std::to_string(day_of_year) + " out of range for year " +
                    std::to_string(year));
    if (hour < 0 || hour > 23) throw Error("hour of day " + std::to_string(hour) + " out of range");
    if (minute < 0 || minute > 59) throw Error("minute " + std::to_string(minute) + " out of range");
    int64_t days = days_from_civil(year, 1, 1) + day_of_year - 1;
    return from_epoch_minute(days * 1440 + hour * 60 + minute);
}

int64_t Timestamp::epoch_hour() const {
    if (!hour_aligned()) throw Error("timestamp is not hour-aligned");
    return minutes_ / 60;
}

int Timestamp::year() const {
    int y;
    unsigned m, d;
    civil_from_days(floor_div(minutes_, 1440), y, m, d);
    return y;
}

int Timestamp::day_of_year() const {
    int64_t days = floor_div(minutes_, 1440);
    int y;
    unsigned m, d;
    civil_from_days(days, y, m, d);
    return static_cast<int>(days - days_from_civil(y, 1, 1)) + 1;
}

int Timestamp::hour_of_day() const { return static_cast<int>((minutes_ % 1440) / 60); }

int Timestamp::minute_of_hour() const { return static_cast<int>(minutes_ % 60); }

TimeTable::TimeTable(std::vector<Timestamp> timestamps, std::vector<Column> columns)
    : timestamps_(std::move(timestamps)), columns_(std::move(columns)) {
    for (size_t i = 1; i < timestamps_.size(); ++i) {
        if (!(timestamps_[i - 1] < timestamps_[i]))
            throw Error("timestamps must be strictly increasing");
    }
    for (const auto& c : columns_) {
        if (c.values.size() != timestamps_.size() || c.missing.size() != timestamps_.size())
            throw Error("column '" + c.name + "' length does not match timestamps");
    }
    for (size_t i = 0; i < columns_.size(); ++i)
        for (size_t j = i + 1; j < columns_.size(); ++j)
            if (columns_[i].name == columns_[j].name)
                throw Error("duplicate column name '" + columns_[i].name + "'");
}

int TimeTable::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns_.size(); ++i)
        if (columns_[i].name == name) return static_cast<int>(i);
    return -1;
}

const Column& TimeTable::column(const std::string& name) const {
    int i = column_index(name);
    if (i < 0) throw Error("unknown column '" + name + "'");
    return columns_[static_cast<size_t>(i)];
}

Column& TimeTable::column(const std::string& name) {
    int i = column_index(name);
    if (i < 0) throw Error("unknown column '" + name + "'");
    return columns_[static_cast<size_t>(i)];
}

void TimeTable::add_column(Column col) {
    if (has_column(col.name)) throw Error("duplicate column name '" + col.name + "'");
    if (col.values.size() != timestamps_.size() || col.missing.size() != timestamps_.size())
        throw Error("column '" + col.name + "' length does not match timestamps");
    columns_.push_back(std::move(col));
}

std::optional<size_t> TimeTable::row_at(Timestamp t) const {
    auto it = std::lower_bound(timestamps_.begin(), timestamps_.end(), t);
    if (it == timestamps_.end() || *it != t) return std::nullopt;
    return static_cast<size_t>(it - timestamps_.begin());
}

TimeTable TimeTable::slice_rows(size_t begin, size_t end) const {
    if (begin > end || end > rows()) throw Error("slice_rows: bad range");
    std::vector<Timestamp> ts(timestamps_.begin() + static_cast<ptrdiff_t>(begin),
                              timestamps_.begin() + static_cast<ptrdiff_t>(end));
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_) {
        Column out;
        out.name = c.name;
        out.values.assign(c.values.begin() + static_cast<ptrdiff_t>(begin),
                          c.values.begin() + static_cast<ptrdiff_t>(end));
        out.missing.assign(c.missing.begin() + static_cast<ptrdiff_t>(begin),
                           c.missing.begin() + static_cast<ptrdiff_t>(end));
        cols.push_back(std::move(out));
    }
    return TimeTable(std::move(ts), std::move(cols));
}

bool TimeTable::operator==(const TimeTable& other) const {
    if (timestamps_ != other.timestamps_) return false;
    if (columns_.size() != other.columns_.size()) return false;
    for (size_t i = 0; i < columns_.size(); ++i) {
        const auto& a = columns_[i];
        const auto& b = other.columns_[i];
        if (a.name != b.name || a.missing != b.missing) return false;
        for (size_t r = 0; r < a.values.size(); ++r) {
            if (a.missing[r]) continue;
            if (std::memcmp(&a.values[r], &b.values[r], sizeof(double)) != 0) return false;
        }
    }
    return true;
}

void write_csv(const TimeTable& t, std::ostream& out) {
    bool aligned = true;
    for (const auto& ts : t.timestamps())
        if (!ts.hour_aligned()) {
            aligned = false;
            break;
        }
    out << (aligned ? "epoch_hour" : "epoch_minute");
    for (const auto& c : t.columns()) out << ',' << c.name;
    out << '\n';
    for (size_t r = 0; r < t.rows(); ++r) {
        const auto& ts = t.timestamps()[r];
        out << (aligned ? ts.epoch_hour() : ts.epoch_minute());
        for (const auto& c : t.columns()) {
            out << ',';
            if (c.missing[r])
                out << "NA";
            else
                out << format_double(c.values[r]);
        }
        out << '\n';
    }
}

std::string to_csv(const TimeTable& t) {
    std::ostringstream ss;
    write_csv(t, ss);
    return ss.str();
}

TimeTable read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error("csv: empty input, header expected");
    std::vector<std::string> header;
    {
        std::string field;
        std::istringstream ls(line);
        while (std::getline(ls, field, ',')) header.push_back(field);
    }
    if (header.empty() || (header[0] != "epoch_hour" && header[0] != "epoch_minute"))
        throw ParseError("csv: first header field must be epoch_hour or epoch_minute", 1);
    const bool hours = header[0] == "epoch_hour";

    std::vector<Timestamp> ts;
    std::vector<Column> cols(header.size() - 1);
    for (size_t i = 1; i < header.size(); ++i) cols[i - 1].name = header[i];

    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        {
            std::string field;
            std::istringstream ls(line);
            while (std::getline(ls, field, ',')) fields.push_back(field);
            if (!line.empty() && line.back() == ',') fields.emplace_back();
        }
        if (fields.size() != header.size())
            throw ParseError("csv: expected " + std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        int64_t epoch = 0;
        auto res = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), epoch);
        if (res.ec != std::errc() || res.ptr != fields[0].data() + fields[0].size())
            throw ParseError("csv: bad epoch field '" + fields[0] + "'", line_no);
        ts.push_back(hours ? Timestamp::from_epoch_hour(epoch) : Timestamp::from_epoch_minute(epoch));
        for (size_t i = 1; i < fields.size(); ++i) {
            auto& col = cols[i - 1];
            if (fields[i] == "NA") {
                col.values.push_back(std::numeric_limits<double>::quiet_NaN());
                col.missing.push_back(1);
            } else {
                double v = 0.0;
                auto vres = std::from_chars(fields[i].data(), fields[i].data() + fields[i].size(), v);
                if (vres.ec != std::errc() || vres.ptr != fields[i].data() + fields[i].size())
                    throw ParseError("csv: bad numeric field '" + fields[i] + "'", line_no);
                col.values.push_back(v);
                col.missing.push_back(0);
            }
        }
    }
    return TimeTable(std::move(ts), std::move(cols));
}

TimeTable read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    return read_csv(in);
}

void write_csv_file(const TimeTable& t, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write '" + tmp + "'");
        write_csv(t, out);
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace mnet
