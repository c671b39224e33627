#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "wateruse/fixture.hpp"
#include "wateruse/generator.hpp"
#include "wateruse/timeseries.hpp"

namespace wateruse {

/// Reads `timestamp_s,flow_lps[,label]`. Timestamps must increase by a constant step; an empty
/// label means no flow or unknown. Throws ParseError with the offending line number.
LabeledTrace read_trace_csv(std::istream& in, const std::string& source = "<input>");
LabeledTrace read_trace_csv(const std::filesystem::path& path);

/// Writes the unlabeled form when `labels` is empty.
void write_trace_csv(std::ostream& out, const FlowSeries& series,
                     const std::vector<std::optional<Fixture>>& labels = {});

/// One ground-truth row: `event_id,fixture,start_s,duration_s,volume_l,overlap_group`.
struct LedgerRow {
    std::string event_id;
    Fixture fixture = Fixture::Toilet;
    double start_s = 0.0;
    double duration_s = 0.0;
    double volume_l = 0.0;
    std::optional<std::size_t> overlap_group;
};

std::vector<LedgerRow> ledger_rows(const GeneratedDataset& ds);
std::vector<LedgerRow> segment_rows(const GeneratedDataset& ds);

void write_ledger_csv(std::ostream& out, const std::vector<LedgerRow>& rows);
std::vector<LedgerRow> read_ledger_csv(std::istream& in, const std::string& source = "<input>");

/// Classifier output row: `event_id,start_s,duration_s,volume_l,predicted,score,provenance,parent_id`.
struct PredictionRow {
    std::string event_id;
    double start_s = 0.0;
    double duration_s = 0.0;
    double volume_l = 0.0;
    std::string predicted;  ///< fixture name, "unclassified" or "combined"
    double score = 0.0;
    std::string provenance;
    std::string parent_id;  ///< empty for top-level events
};

void write_predictions_csv(std::ostream& out, const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> read_predictions_csv(std::istream& in, const std::string& source = "<input>");

/// Shortest decimal form that round-trips.
std::string format_double(double v);

}  // namespace wateruse
