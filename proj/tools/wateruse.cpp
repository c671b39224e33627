#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "wateruse/classifier.hpp"
#include "wateruse/csv_io.hpp"
#include "wateruse/default_model.hpp"
#include "wateruse/dtw.hpp"
#include "wateruse/error.hpp"
#include "wateruse/evaluation.hpp"
#include "wateruse/features.hpp"
#include "wateruse/generator.hpp"
#include "wateruse/manifest.hpp"
#include "wateruse/signature.hpp"

namespace fs = std::filesystem;
using namespace wateruse;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitModel = 3;

// Reads --config files written as nested JSON objects; sections name subcommands.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string prefix) const override {
        nlohmann::json j = nlohmann::json::object();
        for (const CLI::Option* opt : app->get_options()) {
            if (opt->get_lnames().empty() || opt->get_configurable() == false) continue;
            const std::string name = opt->get_lnames()[0];
            if (opt->count() > 0) {
                j[name] = opt->results().size() == 1 ? nlohmann::json(opt->results()[0]) : nlohmann::json(opt->results());
            } else if (default_also && !opt->get_default_str().empty()) {
                j[name] = opt->get_default_str();
            }
        }
        for (const CLI::App* sub : app->get_subcommands({})) {
            j[sub->get_name()] = nlohmann::json::parse(to_config(sub, default_also, false, prefix));
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json j;
        try {
            input >> j;
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("invalid JSON config: ") + e.what());
        }
        std::vector<CLI::ConfigItem> items;
        collect(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        return v.dump();
    }

    static void collect(const nlohmann::json& j, std::vector<std::string> parents, std::vector<CLI::ConfigItem>& out) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                auto p = parents;
                p.push_back(key);
                collect(value, p, out);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            out.push_back(std::move(item));
        }
    }
};

struct Globals {
    std::uint64_t seed = 0;
    bool quiet = false;
    std::vector<std::string> argv;
};

void say(const Globals& g, const std::string& text) {
    if (!g.quiet) std::cout << text;
}

void warn(const std::string& text) { std::cerr << "warning: " << text << '\n'; }

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

template <typename Fn>
void write_stream(const fs::path& path, Fn&& fn) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    std::vector<char> buffer(1 << 20);
    out.rdbuf()->pubsetbuf(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    fn(out);
    out.flush();
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

nlohmann::json options_snapshot(const CLI::App* app) {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options()) {
        if (opt->get_lnames().empty()) continue;
        const std::string name = opt->get_lnames()[0];
        if (name == "help") continue;
        if (opt->count() > 0) {
            const auto& r = opt->results();
            j[name] = r.size() == 1 ? nlohmann::json(r[0]) : nlohmann::json(r);
        } else {
            j[name] = opt->get_default_str();
        }
    }
    return j;
}

class ManifestScope {
public:
    ManifestScope(const Globals& g, const CLI::App* sub) : start_(std::chrono::steady_clock::now()) {
        manifest.command = sub->get_name();
        manifest.argv = g.argv;
        manifest.config = options_snapshot(sub);
        manifest.config["quiet"] = g.quiet;
    }

    void write(const fs::path& path) {
        manifest.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_text(path, to_json(manifest).dump(2) + "\n");
    }

    RunManifest manifest;

private:
    std::chrono::steady_clock::time_point start_;
};

fs::path manifest_path_for(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

// ---------------------------------------------------------------- calibrate

struct CalibrateArgs {
    std::vector<std::string> inputs;
    std::string output;
    std::size_t k_min = 2;
    std::size_t k_max = 10;
    std::optional<int> smooth_degree;
    double cycle_gap_s = 1200.0;
    std::string matrix_dir;
};

void write_matrix_csv(const fs::path& path, const SimilarityMatrix& m) {
    std::ostringstream out;
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m.size(); ++j) out << (j ? "," : "") << format_double(m(i, j));
        out << '\n';
    }
    write_text(path, out.str());
}

int run_calibrate(const Globals& g, const CalibrateArgs& a, const CLI::App* sub) {
    ManifestScope scope(g, sub);
    scope.manifest.seed = g.seed;
    std::vector<EventRecord> events;
    std::optional<double> resolution;
    std::size_t offset = 0;
    for (const auto& path : a.inputs) {
        const LabeledTrace trace = read_trace_csv(fs::path(path));
        if (resolution && std::abs(*resolution - trace.series.resolution()) > 1e-9) {
            fail(ErrorCode::InvalidInput, path + ": resolution differs from the other inputs");
        }
        resolution = trace.series.resolution();
        for (auto ev : extract_labeled_events(trace)) {
            ev.start_index += offset;
            events.push_back(std::move(ev));
        }
        // Keep files apart so no cycle spans two of them.
        offset += trace.series.size() + static_cast<std::size_t>(std::ceil(2.0 * a.cycle_gap_s / *resolution)) + 1;
        scope.manifest.add_input(path);
    }
    CalibrationConfig config;
    config.k_min = a.k_min;
    config.k_max = a.k_max;
    config.smooth_degree = a.smooth_degree;
    config.seed = g.seed;
    config.cycle_gap_s = a.cycle_gap_s;
    config.source = a.inputs.size() == 1 ? fs::path(a.inputs[0]).filename().string() : "labeled traces";
    const SignatureLibrary lib = extract_signatures(events, *resolution, config);
    write_text(a.output, to_json(lib).dump(1) + "\n");
    scope.manifest.add_output(a.output);

    if (!a.matrix_dir.empty()) {
        for (Fixture f : kAllFixtures) {
            std::vector<std::vector<double>> patterns;
            for (const auto& ev : events) {
                if (ev.label == f) patterns.push_back(ev.flows);
            }
            if (patterns.empty()) continue;
            const fs::path p = fs::path(a.matrix_dir) / fmt::format("similarity_{}.csv", to_string(f));
            write_matrix_csv(p, similarity_matrix(patterns));
            scope.manifest.add_output(p);
        }
    }
    for (Fixture f : kAllFixtures) {
        if (!lib.has(f)) {
            warn(fmt::format("no labeled events for {}; library has no signature for it", to_string(f)));
            continue;
        }
        std::size_t regular = 0, sub_patterns = 0;
        for (const auto& s : lib.signatures(f)) {
            regular += s.kind == SignatureKind::Regular;
            sub_patterns += s.kind == SignatureKind::SubPattern;
        }
        say(g, is_intermittent(f)
                   ? fmt::format("{:<15} full cycle {:.0f} s, {} sub-patterns\n", to_string(f),
                                 lib.full_cycle(f)->duration_s, sub_patterns)
                   : fmt::format("{:<15} {} signatures\n", to_string(f), regular));
    }
    scope.write(manifest_path_for(a.output));
    return 0;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
    std::string model;
    std::size_t days = 0;
    std::optional<double> resolution;
    std::string out_dir;
    bool no_fixture_traces = false;
};

int run_generate(const Globals& g, const GenerateArgs& a, const CLI::App* sub) {
    ManifestScope scope(g, sub);
    scope.manifest.seed = g.seed;
    if (a.days < 1) fail(ErrorCode::InvalidInput, "--days must be at least 1");
    UsageModel model;
    if (a.model.empty()) {
        model = default_model();
    } else {
        model = model_from_json(read_json(a.model), fs::path(a.model).parent_path());
        scope.manifest.add_input(a.model);
    }
    if (a.resolution) {
        if (!(*a.resolution > 0.0)) fail(ErrorCode::InvalidInput, "--resolution must be positive");
        model.resolution_s = *a.resolution;
    }
    const GeneratedDataset ds = generate(model, a.days, g.seed);
    const fs::path dir(a.out_dir);
    fs::create_directories(dir);

    const LabeledTrace total = ds.labeled_total();
    write_stream(dir / "total.csv", [&](std::ostream& out) { write_trace_csv(out, total.series, total.labels); });
    scope.manifest.add_output(dir / "total.csv");
    if (!a.no_fixture_traces) {
        for (Fixture f : kAllFixtures) {
            if (!model.priors(f)) continue;
            const LabeledTrace t = ds.labeled_fixture(f);
            const fs::path p = dir / fmt::format("fixture_{}.csv", to_string(f));
            write_stream(p, [&](std::ostream& out) { write_trace_csv(out, t.series, t.labels); });
            scope.manifest.add_output(p);
        }
    }
    write_stream(dir / "ledger.csv", [&](std::ostream& out) { write_ledger_csv(out, ledger_rows(ds)); });
    write_stream(dir / "segments.csv", [&](std::ostream& out) { write_ledger_csv(out, segment_rows(ds)); });
    scope.manifest.add_output(dir / "ledger.csv");
    scope.manifest.add_output(dir / "segments.csv");

    std::size_t truncated = 0;
    for (const auto& e : ds.ledger) truncated += e.truncated;
    say(g, fmt::format("{} days at {} s: {} uses, {} bursts, {} overlap groups\n", ds.days, ds.resolution_s,
                       ds.ledger.size(), ds.segments.size(), ds.overlap_groups));
    if (ds.skipped_infeasible + ds.skipped_overlap > 0) {
        warn(fmt::format("skipped {} infeasible and {} colliding draws", ds.skipped_infeasible, ds.skipped_overlap));
    }
    if (truncated > 0) warn(fmt::format("{} uses cut at the end of the dataset", truncated));
    scope.write(dir / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------- learn

struct LearnArgs {
    std::vector<std::string> inputs;
    std::string output;
};

int run_learn(const Globals& g, const LearnArgs& a, const CLI::App* sub) {
    ManifestScope scope(g, sub);
    std::vector<EventRecord> events;
    for (const auto& path : a.inputs) {
        for (auto& ev : extract_labeled_events(read_trace_csv(fs::path(path)))) events.push_back(std::move(ev));
        scope.manifest.add_input(path);
    }
    const FeatureStats stats = learn_bounds(events);
    write_text(a.output, to_json(stats).dump(2) + "\n");
    scope.manifest.add_output(a.output);

    auto cell = [](const Interval& iv, int digits) { return fmt::format("{:.{}f}-{:.{}f}", iv.lo, digits, iv.hi, digits); };
    std::string table = fmt::format("{:<16}", "");
    for (Fixture f : kAllFixtures) table += fmt::format("{:>17}", to_string(f));
    table += '\n';
    const std::pair<const char*, int> rows[] = {{"Duration (s)", 0}, {"Volume (L)", 2}, {"Peak flow (L/s)", 3}};
    for (std::size_t r = 0; r < 3; ++r) {
        table += fmt::format("{:<16}", rows[r].first);
        for (Fixture f : kAllFixtures) {
            const auto& b = stats[f];
            const Interval& iv = r == 0 ? b.duration_s : (r == 1 ? b.volume_l : b.peak_lps);
            table += fmt::format("{:>17}", cell(iv, rows[r].second));
        }
        table += '\n';
    }
    table += fmt::format("{:<16}", "Events");
    for (Fixture f : kAllFixtures) table += fmt::format("{:>17}", stats[f].count);
    table += '\n';
    say(g, table);
    for (Fixture f : kAllFixtures) {
        if (stats[f].count == 1) warn(fmt::format("{} has a single training event; its bounds are points", to_string(f)));
    }
    scope.write(manifest_path_for(a.output));
    return 0;
}

// ---------------------------------------------------------------- classify

struct ClassifyArgs {
    std::string trace;
    std::string model_dir;
    std::string output;
    ClassifierConfig config;
    std::size_t stride = 0;
};

int run_classify(const Globals& g, ClassifyArgs a, const CLI::App* sub) {
    ManifestScope scope(g, sub);
    const fs::path dir(a.model_dir);
    const fs::path lib_path = dir / "library.json";
    const fs::path stats_path = dir / "stats.json";
    for (const auto& p : {lib_path, stats_path}) {
        if (!fs::exists(p)) fail(ErrorCode::ModelError, "model directory is missing " + p.filename().string());
    }
    if (a.stride > 0) a.config.window_stride = a.stride;
    ClassifierModel model;
    model.config = a.config;
    try {
        model.library = library_from_json(read_json(lib_path));
        model.stats = stats_from_json(read_json(stats_path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ParseError) fail(ErrorCode::ModelError, e.what());
        throw;
    }
    scope.manifest.add_input(a.trace);
    scope.manifest.add_input(lib_path);
    scope.manifest.add_input(stats_path);
    const LabeledTrace trace = read_trace_csv(fs::path(a.trace));
    if (std::abs(trace.series.resolution() - model.library.resolution_s) > 1e-9 && trace.series.size() > 1) {
        warn("trace resolution differs from the signature library's; signatures are resampled");
    }
    const auto predictions = classify_all(trace.series, model);

    std::vector<PredictionRow> rows;
    std::size_t top = 0, combined = 0, unclassified = 0;
    for (const auto& p : predictions) {
        rows.push_back({p.event_id, trace.series.time_of(p.start_index),
                        static_cast<double>(p.length) * trace.series.resolution(), p.volume_l, p.predicted_name(),
                        p.score, p.provenance, p.parent_id});
        top += p.parent_id.empty();
        combined += p.parent_id.empty() && p.combined;
        unclassified += !p.combined && !p.label;
    }
    write_stream(a.output, [&](std::ostream& out) { write_predictions_csv(out, rows); });
    scope.manifest.add_output(a.output);
    say(g, fmt::format("{} events, {} combined, {} rows, {} unclassified\n", top, combined, rows.size(), unclassified));
    scope.write(manifest_path_for(a.output));
    return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string predictions;
    std::string truth;
    std::string out_dir;
    double overlap_frac = 0.5;
};

std::string pct(double v) { return fmt::format("{:.1f}", 100.0 * v); }

int run_evaluate(const Globals& g, const EvaluateArgs& a, const CLI::App* sub) {
    ManifestScope scope(g, sub);
    std::ifstream pin(a.predictions);
    if (!pin) fail(ErrorCode::IoError, "cannot open " + a.predictions);
    std::ifstream tin(a.truth);
    if (!tin) fail(ErrorCode::IoError, "cannot open " + a.truth);
    const auto preds = read_predictions_csv(pin, a.predictions);
    const auto truth = read_ledger_csv(tin, a.truth);
    scope.manifest.add_input(a.predictions);
    scope.manifest.add_input(a.truth);
    const EvaluationReport r = evaluate(preds, truth, a.overlap_frac);

    const fs::path dir(a.out_dir);
    write_text(dir / "report.json", to_json(r).dump(2) + "\n");
    write_text(dir / "confusion.csv", confusion_csv(r.confusion));
    write_text(dir / "per_class.csv", per_class_csv(r));
    for (const char* f : {"report.json", "confusion.csv", "per_class.csv"}) scope.manifest.add_output(dir / f);

    std::string out = "Single vs combined events\n";
    out += fmt::format("{:<18}{:>10}{:>10}\n", "", "Single", "Combined");
    out += fmt::format("{:<18}{:>10}{:>10}\n", "Recall (%)", pct(r.detection.single_metrics.recall),
                       pct(r.detection.combined_metrics.recall));
    out += fmt::format("{:<18}{:>10}{:>10}\n", "Precision (%)", pct(r.detection.single_metrics.precision),
                       pct(r.detection.combined_metrics.precision));
    out += fmt::format("{:<18}{:>10}{:>10}\n\n", "F1 (%)", pct(r.detection.single_metrics.f1),
                       pct(r.detection.combined_metrics.f1));
    out += "Single events (count / volume, %)\n";
    out += fmt::format("{:<16}{:>14}{:>14}{:>14}\n", "", "Precision", "Recall", "F1");
    for (Fixture f : kAllFixtures) {
        const auto& c = r.by_count.classes[index_of(f)].metrics;
        const auto& v = r.by_volume.classes[index_of(f)].metrics;
        out += fmt::format("{:<16}{:>14}{:>14}{:>14}\n", to_string(f), pct(c.precision) + "/" + pct(v.precision),
                           pct(c.recall) + "/" + pct(v.recall), pct(c.f1) + "/" + pct(v.f1));
    }
    out += fmt::format("{:<16}{:>42}\n", "Macro F1", pct(r.by_count.macro_f1) + "/" + pct(r.by_volume.macro_f1));
    say(g, out);
    scope.write(dir / "manifest.json");
    return 0;
}

// ---------------------------------------------------------------- init-model

int run_init_model(const Globals& g, const std::string& output, const CLI::App* sub) {
    ManifestScope scope(g, sub);
    write_text(output, to_json(default_model()).dump(1) + "\n");
    scope.manifest.add_output(output);
    say(g, "wrote the bundled synthetic usage model to " + output + "\n");
    scope.write(manifest_path_for(output));
    return 0;
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidInput:
        case ErrorCode::ParseError:
        case ErrorCode::IoError: return kExitInput;
        case ErrorCode::MissingFixtureData:
        case ErrorCode::ModelError:
        case ErrorCode::VolumeInfeasible: return kExitModel;
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Water end-use signatures, synthetic household demand and event classification"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file with option values; sections name subcommands");
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    g.argv.assign(argv, argv + argc);
    app.add_option("--seed", g.seed, "Master seed for every random choice")->capture_default_str();
    app.add_flag("--quiet", g.quiet, "Suppress summaries on stdout");

    CalibrateArgs cal;
    auto* calibrate = app.add_subcommand("calibrate", "Extract a signature library from labeled traces");
    calibrate->add_option("inputs", cal.inputs, "Labeled trace CSVs (timestamp_s,flow_lps,label)")->required();
    calibrate->add_option("-o,--output", cal.output, "Library JSON")->required();
    calibrate->add_option("--k-min", cal.k_min, "Smallest cluster count tried")->capture_default_str();
    calibrate->add_option("--k-max", cal.k_max, "Largest cluster count tried")->capture_default_str();
    calibrate->add_option("--smooth-degree", cal.smooth_degree, "Polynomial smoothing degree (off unless set; 5 is typical)");
    calibrate->add_option("--cycle-gap", cal.cycle_gap_s, "Seconds of quiet that end a washer/dishwasher cycle")
        ->capture_default_str();
    calibrate->add_option("--matrix-dir", cal.matrix_dir, "Also write per-fixture DTW similarity matrices here");

    GenerateArgs gen;
    auto* generate_cmd = app.add_subcommand("generate", "Generate a synthetic household dataset");
    generate_cmd->add_option("--model", gen.model, "Usage model JSON (default: bundled synthetic model)");
    generate_cmd->add_option("--days", gen.days, "Number of days")->required();
    generate_cmd->add_option("--resolution", gen.resolution, "Sampling period in seconds (default: model's)");
    generate_cmd->add_option("-o,--output", gen.out_dir, "Output directory")->required();
    generate_cmd->add_flag("--no-fixture-traces", gen.no_fixture_traces, "Skip the per-fixture CSV traces");

    LearnArgs lrn;
    auto* learn = app.add_subcommand("learn", "Learn per-fixture 99% feature bounds from labeled traces");
    learn->add_option("inputs", lrn.inputs, "Labeled trace CSVs")->required();
    learn->add_option("-o,--output", lrn.output, "Stats JSON")->required();

    ClassifyArgs cls;
    auto* classify = app.add_subcommand("classify", "Classify the events of a whole-house trace");
    classify->add_option("trace", cls.trace, "Trace CSV")->required();
    classify->add_option("--model-dir", cls.model_dir, "Directory holding library.json and stats.json")->required();
    classify->add_option("-o,--output", cls.output, "Predictions CSV")->required();
    classify->add_option("--variation-threshold", cls.config.variation_threshold,
                         "Smallest flow step (L/s) treated as a use starting or stopping")
        ->capture_default_str();
    classify->add_option("--edge-threshold", cls.config.edge_split_threshold,
                         "Max |last drop - last rise| (L/s) for an edge sub-event")
        ->capture_default_str();
    classify->add_option("--dtw-threshold", cls.config.dtw_accept_threshold,
                         "Max DTW cost per aligned step for a match")
        ->capture_default_str();
    classify->add_option("--stride", cls.stride, "Cycle window stride in samples (default: cycle length / 10)");
    classify->add_flag("--full-slide", cls.config.full_slide, "Slide cycle windows one sample at a time");
    classify->add_option("--max-depth", cls.config.max_decomposition_depth, "Maximum decomposition depth")
        ->capture_default_str();

    EvaluateArgs ev;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score predictions against ground truth");
    evaluate_cmd->add_option("predictions", ev.predictions, "Predictions CSV")->required();
    evaluate_cmd->add_option("truth", ev.truth, "Ground-truth CSV (segments.csv for burst-level truth)")->required();
    evaluate_cmd->add_option("-o,--output", ev.out_dir, "Report directory")->required();
    evaluate_cmd->add_option("--overlap-frac", ev.overlap_frac, "Minimum overlap, as a fraction of the shorter event")
        ->capture_default_str();

    std::string model_out;
    auto* init_model = app.add_subcommand("init-model", "Write the bundled synthetic usage model as JSON");
    init_model->add_option("-o,--output", model_out, "Model JSON")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (*calibrate) return run_calibrate(g, cal, calibrate);
        if (*generate_cmd) return run_generate(g, gen, generate_cmd);
        if (*learn) return run_learn(g, lrn, learn);
        if (*classify) return run_classify(g, cls, classify);
        if (*evaluate_cmd) return run_evaluate(g, ev, evaluate_cmd);
        if (*init_model) return run_init_model(g, model_out, init_model);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
