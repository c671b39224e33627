#include "wateruse/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "wateruse/error.hpp"

namespace wateruse {

namespace {

std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        out.push_back(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

[[noreturn]] void parse_fail(const std::string& source, std::size_t line, const std::string& msg) {
    fail(ErrorCode::ParseError, source + ":" + std::to_string(line) + ": " + msg);
}

double parse_double(std::string_view field, const std::string& source, std::size_t line, const char* what) {
    field = trim(field);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size() || !std::isfinite(v)) {
        parse_fail(source, line, std::string("invalid ") + what + " '" + std::string(field) + "'");
    }
    return v;
}

std::optional<std::size_t> parse_group(std::string_view field, const std::string& source, std::size_t line) {
    field = trim(field);
    if (field.empty()) return std::nullopt;
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc{} || ptr != field.data() + field.size()) {
        parse_fail(source, line, "invalid overlap_group '" + std::string(field) + "'");
    }
    return v;
}

Fixture parse_label(std::string_view field, const std::string& source, std::size_t line) {
    const auto f = parse_fixture(trim(field));
    if (!f) parse_fail(source, line, "unknown fixture '" + std::string(field) + "'");
    return *f;
}

void expect_header(std::istream& in, const std::string& source, std::string_view expected, std::string& line) {
    if (!std::getline(in, line)) parse_fail(source, 1, "empty file, expected header '" + std::string(expected) + "'");
    if (trim(line) != expected) {
        parse_fail(source, 1, "expected header '" + std::string(expected) + "', got '" + std::string(trim(line)) + "'");
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

LabeledTrace read_trace_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) parse_fail(source, 1, "empty file, expected header 'timestamp_s,flow_lps[,label]'");
    const auto header = split(trim(line));
    const bool labeled = header.size() == 3 && trim(header[2]) == "label";
    if (header.size() < 2 || trim(header[0]) != "timestamp_s" || trim(header[1]) != "flow_lps" ||
        (header.size() == 3 && !labeled) || header.size() > 3) {
        parse_fail(source, 1, "expected header 'timestamp_s,flow_lps[,label]'");
    }
    std::vector<double> times;
    std::vector<double> flows;
    std::vector<std::optional<Fixture>> labels;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto fields = split(line);
        if (fields.size() != header.size()) {
            parse_fail(source, lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                                           std::to_string(fields.size()));
        }
        const double t = parse_double(fields[0], source, lineno, "timestamp");
        const double q = parse_double(fields[1], source, lineno, "flow");
        if (q < 0.0) parse_fail(source, lineno, "negative flow");
        if (!times.empty()) {
            if (t <= times.back()) parse_fail(source, lineno, "timestamps must be strictly increasing");
            if (times.size() >= 2) {
                const double step = times[1] - times[0];
                const double expect = times[0] + static_cast<double>(times.size()) * step;
                if (std::abs(t - expect) > 1e-6 * step + 1e-9 * std::abs(expect)) {
                    parse_fail(source, lineno, "irregular sampling: expected timestamp " + format_double(expect));
                }
            }
        }
        times.push_back(t);
        flows.push_back(q);
        if (labeled) {
            const auto field = trim(fields[2]);
            labels.push_back(field.empty() ? std::nullopt : std::optional<Fixture>(parse_label(field, source, lineno)));
        }
    }
    if (times.empty()) parse_fail(source, lineno, "no samples");
    const double res = times.size() >= 2 ? times[1] - times[0] : 1.0;
    if (!labeled) labels.assign(flows.size(), std::nullopt);
    return {FlowSeries(std::move(flows), res, times.front()), std::move(labels)};
}

LabeledTrace read_trace_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    return read_trace_csv(in, path.string());
}

void write_trace_csv(std::ostream& out, const FlowSeries& series, const std::vector<std::optional<Fixture>>& labels) {
    const bool labeled = !labels.empty();
    if (labeled && labels.size() != series.size()) {
        fail(ErrorCode::InvalidInput, "label count does not match the series length");
    }
    out << (labeled ? "timestamp_s,flow_lps,label\n" : "timestamp_s,flow_lps\n");
    std::string buf;
    for (std::size_t i = 0; i < series.size(); ++i) {
        buf = format_double(series.time_of(i));
        buf += ',';
        buf += format_double(series[i]);
        if (labeled) {
            buf += ',';
            if (labels[i]) buf += to_string(*labels[i]);
        }
        buf += '\n';
        out << buf;
    }
}

std::vector<LedgerRow> ledger_rows(const GeneratedDataset& ds) {
    std::vector<LedgerRow> rows;
    rows.reserve(ds.ledger.size());
    for (const auto& e : ds.ledger) {
        rows.push_back({std::to_string(e.id), e.fixture, static_cast<double>(e.start_index) * ds.resolution_s,
                        static_cast<double>(e.length) * ds.resolution_s, e.volume_l, e.overlap_group});
    }
    return rows;
}

std::vector<LedgerRow> segment_rows(const GeneratedDataset& ds) {
    std::vector<LedgerRow> rows;
    rows.reserve(ds.segments.size());
    for (const auto& s : ds.segments) {
        rows.push_back({s.id, s.fixture, static_cast<double>(s.start_index) * ds.resolution_s,
                        static_cast<double>(s.length) * ds.resolution_s, s.volume_l, s.overlap_group});
    }
    return rows;
}

void write_ledger_csv(std::ostream& out, const std::vector<LedgerRow>& rows) {
    out << "event_id,fixture,start_s,duration_s,volume_l,overlap_group\n";
    for (const auto& r : rows) {
        out << r.event_id << ',' << to_string(r.fixture) << ',' << format_double(r.start_s) << ','
            << format_double(r.duration_s) << ',' << format_double(r.volume_l) << ',';
        if (r.overlap_group) out << *r.overlap_group;
        out << '\n';
    }
}

std::vector<LedgerRow> read_ledger_csv(std::istream& in, const std::string& source) {
    std::string line;
    expect_header(in, source, "event_id,fixture,start_s,duration_s,volume_l,overlap_group", line);
    std::vector<LedgerRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split(line);
        if (f.size() != 6) parse_fail(source, lineno, "expected 6 fields, got " + std::to_string(f.size()));
        LedgerRow r;
        r.event_id = std::string(trim(f[0]));
        if (r.event_id.empty()) parse_fail(source, lineno, "empty event_id");
        r.fixture = parse_label(f[1], source, lineno);
        r.start_s = parse_double(f[2], source, lineno, "start_s");
        r.duration_s = parse_double(f[3], source, lineno, "duration_s");
        r.volume_l = parse_double(f[4], source, lineno, "volume_l");
        r.overlap_group = parse_group(f[5], source, lineno);
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_predictions_csv(std::ostream& out, const std::vector<PredictionRow>& rows) {
    out << "event_id,start_s,duration_s,volume_l,predicted,score,provenance,parent_id\n";
    for (const auto& r : rows) {
        out << r.event_id << ',' << format_double(r.start_s) << ',' << format_double(r.duration_s) << ','
            << format_double(r.volume_l) << ',' << r.predicted << ','
            << (std::isfinite(r.score) ? format_double(r.score) : std::string("inf")) << ',' << r.provenance << ','
            << r.parent_id << '\n';
    }
}

std::vector<PredictionRow> read_predictions_csv(std::istream& in, const std::string& source) {
    std::string line;
    expect_header(in, source, "event_id,start_s,duration_s,volume_l,predicted,score,provenance,parent_id", line);
    std::vector<PredictionRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto f = split(line);
        if (f.size() != 8) parse_fail(source, lineno, "expected 8 fields, got " + std::to_string(f.size()));
        PredictionRow r;
        r.event_id = std::string(trim(f[0]));
        if (r.event_id.empty()) parse_fail(source, lineno, "empty event_id");
        r.start_s = parse_double(f[1], source, lineno, "start_s");
        r.duration_s = parse_double(f[2], source, lineno, "duration_s");
        r.volume_l = parse_double(f[3], source, lineno, "volume_l");
        r.predicted = std::string(trim(f[4]));
        const auto score = trim(f[5]);
        r.score = score == "inf" ? std::numeric_limits<double>::infinity()
                                 : parse_double(score, source, lineno, "score");
        r.provenance = std::string(trim(f[6]));
        r.parent_id = std::string(trim(f[7]));
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace wateruse
