#include "wateruse/evaluation.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "wateruse/error.hpp"

namespace wateruse {

namespace {

const char* const kConfusionRows[] = {"toilet", "shower", "faucet", "clothes_washer", "dishwasher",
                                      "unclassified", "missed"};
const char* const kConfusionCols[] = {"toilet", "shower", "faucet", "clothes_washer", "dishwasher", "none"};

double ratio(double num, double den) noexcept { return den > 0.0 ? num / den : 0.0; }

nlohmann::json metrics_json(const ClassCounts& c, const Metrics& m) {
    return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
}

nlohmann::json score_json(const ScoreReport& r) {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& c : r.classes) classes[std::string(to_string(c.fixture))] = metrics_json(c.counts, c.metrics);
    return {{"weighting", r.weighting == Weighting::Count ? "count" : "volume"},
            {"classes", classes},
            {"macro_f1", r.macro_f1}};
}

TimeSpan span_of(double start, double duration) { return {start, start + duration}; }

}  // namespace

Metrics metrics(const ClassCounts& c) noexcept {
    Metrics m;
    m.precision = ratio(c.tp, c.tp + c.fp);
    m.recall = ratio(c.tp, c.tp + c.fn);
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    return m;
}

double overlap(const TimeSpan& a, const TimeSpan& b) noexcept {
    return std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
}

Matching match_events(std::span<const TimeSpan> predictions, std::span<const TimeSpan> truth, double overlap_frac) {
    std::vector<std::size_t> p_order(predictions.size());
    std::vector<std::size_t> t_order(truth.size());
    std::iota(p_order.begin(), p_order.end(), 0);
    std::iota(t_order.begin(), t_order.end(), 0);
    auto by_start = [](std::span<const TimeSpan> v) {
        return [v](std::size_t a, std::size_t b) {
            return std::tie(v[a].start, v[a].end) < std::tie(v[b].start, v[b].end);
        };
    };
    std::sort(p_order.begin(), p_order.end(), by_start(predictions));
    std::sort(t_order.begin(), t_order.end(), by_start(truth));

    struct Candidate {
        double amount;
        std::size_t p;
        std::size_t t;
    };
    std::vector<Candidate> candidates;
    double max_truth_len = 0.0;
    for (const auto& t : truth) max_truth_len = std::max(max_truth_len, t.length());
    std::size_t lo = 0;
    for (std::size_t p : p_order) {
        const TimeSpan& ps = predictions[p];
        while (lo < t_order.size() && truth[t_order[lo]].start + max_truth_len <= ps.start) ++lo;
        for (std::size_t k = lo; k < t_order.size() && truth[t_order[k]].start < ps.end; ++k) {
            const TimeSpan& ts = truth[t_order[k]];
            const double amount = overlap(ps, ts);
            const double shorter = std::min(ps.length(), ts.length());
            if (amount > 0.0 && amount >= overlap_frac * shorter) candidates.push_back({amount, p, t_order[k]});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        if (a.amount != b.amount) return a.amount > b.amount;
        const auto& pa = predictions[a.p];
        const auto& pb = predictions[b.p];
        const auto& ta = truth[a.t];
        const auto& tb = truth[b.t];
        return std::tie(pa.start, pa.end, ta.start, ta.end) < std::tie(pb.start, pb.end, tb.start, tb.end);
    });
    std::vector<bool> p_used(predictions.size(), false);
    std::vector<bool> t_used(truth.size(), false);
    Matching m;
    for (const auto& c : candidates) {
        if (p_used[c.p] || t_used[c.t]) continue;
        p_used[c.p] = t_used[c.t] = true;
        m.pairs.emplace_back(c.p, c.t);
    }
    std::sort(m.pairs.begin(), m.pairs.end());
    for (std::size_t p = 0; p < predictions.size(); ++p) {
        if (!p_used[p]) m.unmatched_predictions.push_back(p);
    }
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!t_used[t]) m.unmatched_truth.push_back(t);
    }
    return m;
}

ScoreReport score(const Matching& matching, std::span<const ScoredEvent> predictions,
                  std::span<const ScoredEvent> truth, Weighting weighting) {
    ScoreReport r;
    r.weighting = weighting;
    for (Fixture f : kAllFixtures) r.classes[index_of(f)].fixture = f;
    auto weight = [&](const ScoredEvent& e) { return weighting == Weighting::Count ? 1.0 : e.volume_l; };
    std::array<bool, kFixtureCount> involved{};
    for (const auto& [p, t] : matching.pairs) {
        const auto& pe = predictions[p];
        const auto& te = truth[t];
        const Fixture actual = *te.label;
        involved[index_of(actual)] = true;
        if (pe.label == actual) {
            r.classes[index_of(actual)].counts.tp += weight(te);
            continue;
        }
        r.classes[index_of(actual)].counts.fn += weight(te);
        if (pe.label) {
            r.classes[index_of(*pe.label)].counts.fp += weight(pe);
            involved[index_of(*pe.label)] = true;
        }
    }
    for (std::size_t t : matching.unmatched_truth) {
        r.classes[index_of(*truth[t].label)].counts.fn += weight(truth[t]);
        involved[index_of(*truth[t].label)] = true;
    }
    for (std::size_t p : matching.unmatched_predictions) {
        if (!predictions[p].label) continue;
        r.classes[index_of(*predictions[p].label)].counts.fp += weight(predictions[p]);
        involved[index_of(*predictions[p].label)] = true;
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (auto& c : r.classes) {
        c.metrics = metrics(c.counts);
        if (involved[index_of(c.fixture)]) {
            sum += c.metrics.f1;
            ++n;
        }
    }
    r.macro_f1 = ratio(sum, static_cast<double>(n));
    return r;
}

DetectionTable detection_table(std::size_t single_tp, std::size_t single_fp, std::size_t single_fn,
                               std::size_t combined_tp, std::size_t combined_fp, std::size_t combined_fn) {
    DetectionTable d;
    d.single = {static_cast<double>(single_tp), static_cast<double>(single_fp), static_cast<double>(single_fn)};
    d.combined = {static_cast<double>(combined_tp), static_cast<double>(combined_fp), static_cast<double>(combined_fn)};
    d.true_negative = static_cast<double>(combined_tp);
    d.single_metrics = metrics(d.single);
    d.combined_metrics = metrics(d.combined);
    return d;
}

EvaluationReport evaluate(const std::vector<PredictionRow>& predictions, const std::vector<LedgerRow>& truth,
                          double overlap_frac) {
    EvaluationReport report;
    report.overlap_frac = overlap_frac;

    std::unordered_map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (!by_id.emplace(predictions[i].event_id, i).second) {
            fail(ErrorCode::ModelError, "duplicate prediction id '" + predictions[i].event_id + "'");
        }
    }
    std::unordered_set<std::string> truth_ids;
    for (const auto& t : truth) {
        if (!truth_ids.insert(t.event_id).second) fail(ErrorCode::ModelError, "duplicate truth id '" + t.event_id + "'");
    }
    for (const auto& p : predictions) {
        if (!p.parent_id.empty() && !by_id.count(p.parent_id)) {
            fail(ErrorCode::ModelError, "prediction '" + p.event_id + "' refers to unknown parent '" + p.parent_id + "'");
        }
    }
    if (!predictions.empty() && !truth.empty()) {
        TimeSpan ps{predictions.front().start_s, predictions.front().start_s};
        for (const auto& p : predictions) {
            ps.start = std::min(ps.start, p.start_s);
            ps.end = std::max(ps.end, p.start_s + p.duration_s);
        }
        TimeSpan ts{truth.front().start_s, truth.front().start_s};
        for (const auto& t : truth) {
            ts.start = std::min(ts.start, t.start_s);
            ts.end = std::max(ts.end, t.start_s + t.duration_s);
        }
        if (overlap(ps, ts) <= 0.0) fail(ErrorCode::ModelError, "predictions and truth cover disjoint time spans");
    }

    auto root_of = [&](std::size_t i) {
        std::size_t guard = 0;
        while (!predictions[i].parent_id.empty()) {
            i = by_id.at(predictions[i].parent_id);
            if (++guard > predictions.size()) fail(ErrorCode::ModelError, "cyclic parent ids");
        }
        return i;
    };

    // Truth segments inside each top-level event.
    std::vector<TimeSpan> truth_spans;
    for (const auto& t : truth) truth_spans.push_back(span_of(t.start_s, t.duration_s));
    std::vector<std::size_t> truth_order(truth.size());
    std::iota(truth_order.begin(), truth_order.end(), 0);
    std::sort(truth_order.begin(), truth_order.end(),
              [&](std::size_t a, std::size_t b) { return truth_spans[a].start < truth_spans[b].start; });
    double max_truth_len = 0.0;
    for (const auto& s : truth_spans) max_truth_len = std::max(max_truth_len, s.length());
    auto truth_inside = [&](const TimeSpan& span) {
        std::vector<std::size_t> hits;
        auto it = std::lower_bound(truth_order.begin(), truth_order.end(), span.start - max_truth_len,
                                   [&](std::size_t t, double v) { return truth_spans[t].start < v; });
        for (; it != truth_order.end() && truth_spans[*it].start < span.end; ++it) {
            if (overlap(truth_spans[*it], span) > 0.0) hits.push_back(*it);
        }
        return hits;
    };

    std::map<std::size_t, std::size_t> segments_in_top;  // top-level prediction -> truth count
    std::vector<bool> truth_covered(truth.size(), false);
    std::size_t s_tp = 0, s_fp = 0, s_fn = 0, c_tp = 0, c_fp = 0, c_fn = 0;
    std::set<std::size_t> groups_seen;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        if (!p.parent_id.empty()) continue;
        const auto hits = truth_inside(span_of(p.start_s, p.duration_s));
        segments_in_top[i] = hits.size();
        for (std::size_t t : hits) {
            truth_covered[t] = true;
            if (truth[t].overlap_group) groups_seen.insert(*truth[t].overlap_group);
        }
        const bool predicted_combined = p.provenance == "combined";
        const bool actual_combined = hits.size() >= 2;
        const bool actual_single = hits.size() == 1;
        if (predicted_combined) {
            if (actual_combined) ++c_tp;
            else ++c_fp;
            if (actual_single) ++s_fn;
        } else {
            if (actual_single) ++s_tp;
            else ++s_fp;
            if (actual_combined) ++c_fn;
        }
    }
    std::set<std::size_t> all_groups;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (truth[t].overlap_group) {
            all_groups.insert(*truth[t].overlap_group);
        } else if (!truth_covered[t]) {
            ++s_fn;
        }
    }
    for (std::size_t g : all_groups) {
        if (!groups_seen.count(g)) ++c_fn;
    }
    report.detection = detection_table(s_tp, s_fp, s_fn, c_tp, c_fp, c_fn);
    report.truth_overlap_groups = all_groups.size();

    // Single-event scope.
    std::vector<TimeSpan> p_spans;
    std::vector<ScoredEvent> p_events;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        if (p.predicted == "combined") continue;
        if (segments_in_top.at(root_of(i)) != 1) continue;
        p_spans.push_back(span_of(p.start_s, p.duration_s));
        ScoredEvent e;
        e.label = parse_fixture(p.predicted);
        e.volume_l = p.volume_l;
        p_events.push_back(e);
    }
    std::vector<TimeSpan> t_spans;
    std::vector<ScoredEvent> t_events;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (truth[t].overlap_group) continue;
        t_spans.push_back(truth_spans[t]);
        t_events.push_back({truth[t].fixture, truth[t].volume_l});
    }
    report.truth_single = t_events.size();
    report.predicted_single_scope = p_events.size();
    const Matching m = match_events(p_spans, t_spans, overlap_frac);
    report.by_count = score(m, p_events, t_events, Weighting::Count);
    report.by_volume = score(m, p_events, t_events, Weighting::Volume);

    constexpr std::size_t kUnclassified = kFixtureCount;
    constexpr std::size_t kMissed = kFixtureCount + 1;
    constexpr std::size_t kNone = kFixtureCount;
    auto row_of = [&](const ScoredEvent& e) { return e.label ? index_of(*e.label) : kUnclassified; };
    for (const auto& [p, t] : m.pairs) ++report.confusion.counts[row_of(p_events[p])][index_of(*t_events[t].label)];
    for (std::size_t p : m.unmatched_predictions) ++report.confusion.counts[row_of(p_events[p])][kNone];
    for (std::size_t t : m.unmatched_truth) ++report.confusion.counts[kMissed][index_of(*t_events[t].label)];
    return report;
}

nlohmann::json to_json(const EvaluationReport& r) {
    nlohmann::json confusion = nlohmann::json::array();
    for (std::size_t i = 0; i < ConfusionMatrix::kRows; ++i) {
        nlohmann::json row = nlohmann::json::object();
        for (std::size_t j = 0; j < ConfusionMatrix::kCols; ++j) row[kConfusionCols[j]] = r.confusion.counts[i][j];
        confusion.push_back({{"predicted", kConfusionRows[i]}, {"actual", row}});
    }
    return {{"overlap_frac", r.overlap_frac},
            {"truth_single_events", r.truth_single},
            {"truth_overlap_groups", r.truth_overlap_groups},
            {"scored_single_predictions", r.predicted_single_scope},
            {"detection",
             {{"single", metrics_json(r.detection.single, r.detection.single_metrics)},
              {"combined", metrics_json(r.detection.combined, r.detection.combined_metrics)},
              {"true_negative", r.detection.true_negative}}},
            {"single_events", {{"count", score_json(r.by_count)}, {"volume", score_json(r.by_volume)}}},
            {"confusion", confusion}};
}

std::string confusion_csv(const ConfusionMatrix& m) {
    std::ostringstream out;
    out << "predicted";
    for (const char* c : kConfusionCols) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < ConfusionMatrix::kRows; ++i) {
        out << kConfusionRows[i];
        for (std::size_t j = 0; j < ConfusionMatrix::kCols; ++j) out << ',' << m.counts[i][j];
        out << '\n';
    }
    return out.str();
}

std::string per_class_csv(const EvaluationReport& r) {
    std::ostringstream out;
    out << "weighting,class,tp,fp,fn,precision,recall,f1\n";
    for (const ScoreReport* s : {&r.by_count, &r.by_volume}) {
        const char* w = s->weighting == Weighting::Count ? "count" : "volume";
        for (const auto& c : s->classes) {
            out << w << ',' << to_string(c.fixture) << ',' << format_double(c.counts.tp) << ','
                << format_double(c.counts.fp) << ',' << format_double(c.counts.fn) << ','
                << format_double(c.metrics.precision) << ',' << format_double(c.metrics.recall) << ','
                << format_double(c.metrics.f1) << '\n';
        }
    }
    return out.str();
}

}  // namespace wateruse
