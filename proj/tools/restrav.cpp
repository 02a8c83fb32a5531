// restrav command-line tool. Exit codes: 0 ok, 1 some items failed, 2 config/load
// error, 3 protocol violation.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "restrav/classifiers.hpp"
#include "restrav/encoder.hpp"
#include "restrav/error.hpp"
#include "restrav/features.hpp"
#include "restrav/geometry.hpp"
#include "restrav/harness.hpp"
#include "restrav/image_io.hpp"
#include "restrav/ingest.hpp"
#include "restrav/metrics.hpp"
#include "restrav/parallel.hpp"
#include "restrav/synthetic.hpp"

namespace fs = std::filesystem;
using namespace restrav;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;
constexpr int kExitProtocol = 3;

enum class LogLevel { error, warn, info, debug };

struct Globals {
    std::uint64_t seed = 0;
    unsigned workers = 0;
    std::string log_level = "warn";
    bool pretty = false;

    LogLevel level() const {
        if (log_level == "error") return LogLevel::error;
        if (log_level == "info") return LogLevel::info;
        if (log_level == "debug") return LogLevel::debug;
        return LogLevel::warn;
    }
};

Globals g;

void log(LogLevel lvl, const std::string& msg) {
    static const char* names[] = {"error", "warn", "info", "debug"};
    if (lvl <= g.level()) std::cerr << "[" << names[static_cast<int>(lvl)] << "] " << msg << '\n';
}

std::string dump(const nlohmann::json& j) { return g.pretty ? j.dump(2) : j.dump(); }

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text << '\n';
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
    out << text << '\n';
}

struct SamplingFlags {
    double window = 2.0;
    int frames = 24;
    double offset = 0.0;
    std::string mode = "uniform_time";
    int k = 1;

    void add(CLI::App* app) {
        app->add_option("--window", window, "Window length in seconds")->capture_default_str();
        app->add_option("--frames,-T", frames, "Frames per window (uniform_time)")->capture_default_str();
        app->add_option("--offset", offset, "Window start in seconds")->capture_default_str();
        app->add_option("--sampling", mode, "uniform_time | every_kth")->capture_default_str();
        app->add_option("--k", k, "Stride for every_kth")->capture_default_str();
    }
    SamplingConfig config() const {
        SamplingConfig c;
        c.window_seconds = window;
        c.frame_count = frames;
        c.window_offset_seconds = offset;
        c.mode = sampling_mode_from_string(mode);
        c.k = k;
        c.validate();
        return c;
    }
};

struct BackendFlags {
    std::string model;
    std::string manifest;
    double fps = 30.0;
    std::string decoder;
    std::string decoder_size;

    void add(CLI::App* app) {
        app->add_option("--backend", model, "ONNX encoder model (RESTRAV_BACKEND overrides)");
        app->add_option("--backend-manifest", manifest, "Backend manifest JSON (default <model>.json)");
        app->add_option("--fps", fps, "Frame rate for image directories and raw streams")->capture_default_str();
        app->add_option("--decoder", decoder, "Decoder command template with {input}, writing RGB24 to stdout");
        app->add_option("--decoder-size", decoder_size, "Decoded frame size WxH");
    }

    std::string model_path() const {
        if (const char* env = std::getenv("RESTRAV_BACKEND"); env && *env) return env;
        return model;
    }

    // Loads the backend when one is configured; null otherwise.
    std::unique_ptr<EncoderBackend> load() const {
        const auto path = model_path();
        if (path.empty()) return nullptr;
        const fs::path mpath = manifest.empty() ? default_manifest_path(path) : fs::path(manifest);
        return load_onnx_backend(path, mpath);
    }

    EncodeContext context(EncoderBackend* backend) const {
        EncodeContext ctx;
        ctx.backend = backend;
        ctx.default_fps = fps;
        ctx.decoder_command = decoder;
        if (!decoder_size.empty()) {
            int w = 0, h = 0;
            if (std::sscanf(decoder_size.c_str(), "%dx%d", &w, &h) != 2 || w <= 0 || h <= 0) {
                throw Error(ErrorCode::ConfigInvalid, "--decoder-size must look like 640x360");
            }
            ctx.decoder_width = w;
            ctx.decoder_height = h;
        }
        return ctx;
    }
};

std::set<std::string> split_list(const std::string& s) {
    std::set<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) out.insert(item);
    }
    return out;
}

struct ProtocolFlags {
    std::string mode = "seen";
    std::string train_generators;
    std::string test_generators;
    std::string classifier = "MLP";
    double assumed_encode_ms = -1.0;
    int epochs = 200;

    void add(CLI::App* app) {
        app->add_option("--mode", mode, "seen | unseen | future | cross_source")->capture_default_str();
        app->add_option("--train-generators", train_generators, "Comma-separated generator tags");
        app->add_option("--test-generators", test_generators, "Comma-separated generator tags");
        app->add_option("--classifier,-c", classifier, "LR | GNB | MLP")->capture_default_str();
        app->add_option("--assumed-encode-ms", assumed_encode_ms, "Fixed encode cost for latency accounting");
        app->add_option("--epochs", epochs, "MLP epochs")->capture_default_str();
    }

    ProtocolConfig config(const SamplingFlags& s) const {
        ProtocolConfig c;
        c.mode = protocol_mode_from_string(mode);
        c.train_generators = split_list(train_generators);
        c.test_generators = split_list(test_generators);
        c.kind = classifier_kind_from_string(classifier);
        c.sampling = s.config();
        c.seed = g.seed;
        c.workers = g.workers;
        c.train_options.mlp_epochs = epochs;
        if (epochs <= 0) throw Error(ErrorCode::ConfigInvalid, "--epochs must be positive");
        if (assumed_encode_ms >= 0.0) c.assumed_encode_ms = assumed_encode_ms;
        return c;
    }
};

// Expands inputs: a directory of images is one clip; other directories list clips.
std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
    std::vector<fs::path> out;
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (!fs::is_directory(p)) {
            out.push_back(p);
            continue;
        }
        bool has_images = false;
        std::vector<fs::path> children;
        for (const auto& e : fs::directory_iterator(p)) {
            if (e.is_regular_file() && is_supported_image(e.path())) has_images = true;
            if (e.is_directory() || e.is_regular_file()) children.push_back(e.path());
        }
        if (has_images) {
            out.push_back(p);
        } else {
            std::sort(children.begin(), children.end());
            out.insert(out.end(), children.begin(), children.end());
        }
    }
    return out;
}

VideoRecord ad_hoc_record(const fs::path& p, std::optional<double> fps) {
    VideoRecord r;
    r.id = p.string();
    r.source = fs::absolute(p).string();
    r.fps = fps;
    return r;
}

// ---- subcommands ------------------------------------------------------------------------

int cmd_embed(const std::vector<std::string>& inputs, const std::string& manifest_path, const std::string& out_dir,
              const SamplingFlags& sflags, const BackendFlags& bflags, bool precomputed) {
    const auto sampling = sflags.config();
    std::unique_ptr<EncoderBackend> backend;
    if (!precomputed) {
        if (bflags.model_path().empty()) throw Error(ErrorCode::BackendLoadFailure, "no --backend given");
        backend = bflags.load();
    }
    const auto ctx = bflags.context(backend.get());
    fs::create_directories(out_dir);

    Manifest manifest;
    Manifest out_manifest;
    std::vector<const VideoRecord*> recs;
    std::vector<VideoRecord> owned;
    if (!manifest_path.empty()) {
        manifest = Manifest::load(manifest_path);
        for (const auto& r : manifest.records) recs.push_back(&r);
    } else {
        for (const auto& p : expand_inputs(inputs)) owned.push_back(ad_hoc_record(p, std::nullopt));
        for (const auto& r : owned) recs.push_back(&r);
    }
    if (recs.empty()) throw Error(ErrorCode::ConfigInvalid, "no inputs");

    int failed = 0;
    for (const auto* r : recs) {
        const fs::path src = manifest.resolve(*r);
        std::string stem = manifest_path.empty() ? src.filename().string() : r->id;
        if (stem.empty()) stem = src.parent_path().filename().string();
        const fs::path out = fs::path(out_dir) / (fs::path(stem).stem().string() + ".emb");
        try {
            VideoRecord rec = *r;
            // Frame sources are sampled during decoding; full-rate embedding files by fps.
            const auto traj = load_trajectory(manifest, rec, sampling, ctx);
            traj.validate();
            store_embeddings(out, traj);
            std::cout << r->id << '\t' << out.string() << '\t' << traj.frames << 'x' << traj.dim << '\n';
            VideoRecord o = *r;
            o.source = fs::absolute(out).string();
            o.fps.reset();
            out_manifest.records.push_back(std::move(o));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::BackendLoadFailure) throw;
            ++failed;
            std::cout << r->id << "\tERROR\t" << e.what() << '\n';
        } catch (const std::exception& e) {
            ++failed;
            std::cout << r->id << "\tERROR\t" << e.what() << '\n';
        }
    }
    if (!manifest_path.empty()) out_manifest.save(fs::path(out_dir) / "manifest.jsonl");
    log(LogLevel::info, std::to_string(recs.size() - failed) + " embedded, " + std::to_string(failed) + " failed");
    return failed ? kExitPartial : kExitOk;
}

int cmd_featurize(const std::vector<std::string>& inputs, const std::string& manifest_path, const std::string& out,
                  const SamplingFlags& sflags, const BackendFlags& bflags, double resample_fps) {
    const auto sampling = sflags.config();
    auto backend = bflags.load();
    const auto ctx = bflags.context(backend.get());

    Manifest manifest;
    std::vector<VideoRecord> owned;
    std::vector<const VideoRecord*> recs;
    if (!manifest_path.empty()) {
        manifest = Manifest::load(manifest_path);
        for (const auto& r : manifest.records) recs.push_back(&r);
    } else {
        std::optional<double> fps;
        if (resample_fps > 0.0) fps = resample_fps;
        for (const auto& p : expand_inputs(inputs)) owned.push_back(ad_hoc_record(p, fps));
        for (const auto& r : owned) recs.push_back(&r);
    }
    if (recs.empty()) throw Error(ErrorCode::ConfigInvalid, "no inputs");

    const auto done = process_records(manifest, recs, sampling, ctx, g.workers);
    FeatureTable table;
    table.sampling = {{"window_seconds", sampling.window_seconds},
                      {"frame_count", sampling.frame_count},
                      {"window_offset_seconds", sampling.window_offset_seconds},
                      {"mode", to_string(sampling.mode)},
                      {"k", sampling.k}};
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (!done.results[i]) continue;
        FeatureRow row;
        row.source_id = recs[i]->id;
        if (!manifest_path.empty()) {
            row.label = static_cast<int>(recs[i]->label);
            row.generator = recs[i]->generator;
        }
        row.values = done.results[i]->features;
        table.rows.push_back(std::move(row));
    }
    table.errors = done.errors;
    for (const auto& [id, msg] : done.errors) log(LogLevel::warn, id + ": " + msg);
    write_feature_csv(out, table);
    std::cout << dump({{"rows", table.rows.size()}, {"errors", table.errors.size()}, {"csv", out}}) << '\n';
    return done.errors.empty() ? kExitOk : kExitPartial;
}

// Training data from a feature CSV: every labelled row.
void csv_matrix(const FeatureTable& t, Matrix& x, std::vector<int>& y, std::vector<std::string>* gens = nullptr) {
    std::size_t n = 0;
    for (const auto& r : t.rows) n += r.label.has_value();
    if (n == 0) throw Error(ErrorCode::ConfigInvalid, "feature CSV has no labelled rows");
    const std::size_t w = t.rows.front().values.size();
    x = Matrix(n, w);
    std::size_t i = 0;
    for (const auto& r : t.rows) {
        if (!r.label) continue;
        std::copy(r.values.begin(), r.values.end(), x.row(i++).begin());
        y.push_back(*r.label);
        if (gens) gens->push_back(r.generator.empty() ? (*r.label ? "generated" : kNaturalGenerator) : r.generator);
    }
}

int cmd_train(const std::string& manifest_path, const std::string& features, const std::string& out,
              const SamplingFlags& sflags, const ProtocolFlags& pflags, const BackendFlags& bflags) {
    auto cfg = pflags.config(sflags);
    ClassifierModel model;
    std::vector<std::pair<std::string, std::string>> errors;
    if (!features.empty()) {
        const auto table = read_feature_csv(features);
        Matrix x;
        std::vector<int> y;
        csv_matrix(table, x, y);
        model = train(cfg.kind, x, y, cfg.train_options, cfg.seed, table.layout);
        errors = table.errors;
    } else {
        if (manifest_path.empty()) throw Error(ErrorCode::ConfigInvalid, "need --manifest or --features");
        const auto manifest = Manifest::load(manifest_path);
        auto backend = bflags.load();
        model = train_from_manifest(manifest, cfg, bflags.context(backend.get()), &errors);
    }
    save_model(out, model);
    for (const auto& [id, msg] : errors) log(LogLevel::warn, id + ": " + msg);
    nlohmann::json summary{{"model", out},
                           {"classifier", to_string(model.kind)},
                           {"tau_star", model.tau_star},
                           {"n_train", model.train_metadata.value("n_train", 0)},
                           {"errors", errors.size()}};
    if (model.train_metadata.contains("warnings")) summary["warnings"] = model.train_metadata["warnings"];
    std::cout << dump(summary) << '\n';
    return errors.empty() ? kExitOk : kExitPartial;
}

void print_percentages(const MetricsReport& m) {
    auto pct = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%6.2f%%", 100.0 * v);
        return std::string(buf);
    };
    std::cerr << "acc " << pct(m.acc) << "  bal " << pct(m.balanced_acc) << "  spec " << pct(m.specificity)
              << "  pr_gen " << pct(m.precision_gen) << "  re_gen " << pct(m.recall_gen) << "  f1_gen "
              << pct(m.f1_gen) << "  auroc " << pct(m.auroc) << "  ap " << pct(m.ap) << '\n';
}

struct EvalOutputs {
    std::string report;
    std::string roc_csv;
    std::string pr_csv;
    std::string roc_svg;

    void add(CLI::App* app) {
        app->add_option("--out,-o", report, "Report JSON (default stdout)");
        app->add_option("--roc-csv", roc_csv, "ROC curve CSV");
        app->add_option("--pr-csv", pr_csv, "Precision-recall curve CSV");
        app->add_option("--roc-svg", roc_svg, "ROC curve SVG");
    }

    void curves(const std::vector<double>& scores, const std::vector<int>& labels) const {
        const bool both = std::count(labels.begin(), labels.end(), 1) > 0 && std::count(labels.begin(), labels.end(), 0) > 0;
        if (!both) return;
        if (!roc_csv.empty()) write_roc_csv(roc_csv, roc_curve(scores, labels));
        if (!pr_csv.empty()) write_pr_csv(pr_csv, pr_curve(scores, labels));
        if (!roc_svg.empty()) write_roc_svg(roc_svg, roc_curve(scores, labels), "ROC");
    }
};

int cmd_eval(const std::string& manifest_path, const std::string& features, const std::string& model_path,
             const SamplingFlags& sflags, const ProtocolFlags& pflags, const BackendFlags& bflags,
             const EvalOutputs& outs) {
    auto cfg = pflags.config(sflags);
    std::optional<ClassifierModel> model;
    if (!model_path.empty()) model = load_model(model_path);

    if (!features.empty()) {
        if (!model) throw Error(ErrorCode::ConfigInvalid, "evaluating a feature CSV needs --model");
        const auto table = read_feature_csv(features);
        Matrix x;
        std::vector<int> y;
        std::vector<std::string> gens;
        csv_matrix(table, x, y, &gens);
        std::vector<double> scores;
        double lat = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) {
            FeatureVector fv{std::vector<double>(x.row(i).begin(), x.row(i).end()), ""};
            const auto p = predict(*model, fv, table.layout);
            scores.push_back(p.score);
            lat += p.latency_ms;
        }
        auto m = compute_metrics(scores, y, model->tau_star);
        m.latency_ms_mean = lat / static_cast<double>(x.rows);
        nlohmann::json rep{{"config", {{"features", features}, {"model", model_path}}},
                           {"seed", g.seed},
                           {"metrics", m.to_json()},
                           {"tau_star", model->tau_star},
                           {"latency", {{"mean_ms", m.latency_ms_mean}}}};
        rep["confusion"] = rep["metrics"]["confusion"];
        write_text(outs.report, dump(rep));
        if (g.pretty) print_percentages(m);
        outs.curves(scores, y);
        return table.errors.empty() ? kExitOk : kExitPartial;
    }

    if (manifest_path.empty()) throw Error(ErrorCode::ConfigInvalid, "need --manifest or --features");
    const auto manifest = Manifest::load(manifest_path);
    auto backend = bflags.load();
    const auto rep = run_protocol(manifest, cfg, bflags.context(backend.get()), model ? &*model : nullptr);
    write_text(outs.report, dump(rep.to_json()));
    for (const auto& [id, msg] : rep.errors) log(LogLevel::warn, id + ": " + msg);
    if (g.pretty) print_percentages(rep.metrics);
    outs.curves(rep.test_scores, rep.test_labels);
    return rep.errors.empty() ? kExitOk : kExitPartial;
}

int cmd_detect(const std::vector<std::string>& inputs, const std::string& model_path, const SamplingFlags& sflags,
               const BackendFlags& bflags, double resample_fps) {
    const auto model = load_model(model_path);
    const auto sampling = sflags.config();
    auto backend = bflags.load();
    const auto ctx = bflags.context(backend.get());
    const Manifest none;
    std::optional<double> fps;
    if (resample_fps > 0.0) fps = resample_fps;
    int failed = 0;
    const auto paths = expand_inputs(inputs);
    if (paths.empty()) throw Error(ErrorCode::ConfigInvalid, "no inputs");
    for (const auto& p : paths) {
        const auto rec = ad_hoc_record(p, fps);
        try {
            const auto t0 = std::chrono::steady_clock::now();
            const auto traj = load_trajectory(none, rec, sampling, ctx);
            const auto sig = compute_signals(traj);
            auto fv = build_feature_vector(sig);
            const auto pred = predict(model, fv);
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            char buf[96];
            std::snprintf(buf, sizeof buf, "\t%.6f\t%s\t%.3f", pred.score, to_string(pred.label).c_str(), ms);
            std::cout << rec.id << buf << '\n';
        } catch (const std::exception& e) {
            ++failed;
            log(LogLevel::error, rec.id + ": " + e.what());
        }
    }
    return failed ? kExitPartial : kExitOk;
}

int cmd_2afc(const std::string& manifest_path, const std::string& out, const SamplingFlags& sflags,
             const BackendFlags& bflags) {
    const auto manifest = Manifest::load(manifest_path);
    auto backend = bflags.load();
    const auto rep = run_2afc(manifest, sflags.config(), bflags.context(backend.get()), g.workers);
    write_text(out, dump(rep.to_json()));
    if (g.pretty) {
        for (const auto& [gen, acc] : rep.per_generator) std::fprintf(stderr, "%-16s %6.2f%%\n", gen.c_str(), 100 * acc);
        std::fprintf(stderr, "%-16s %6.2f%%\n", "overall", 100 * rep.accuracy);
    }
    return rep.errors.empty() ? kExitOk : kExitPartial;
}

template <typename T>
std::vector<T> parse_list(const std::string& s) {
    std::vector<T> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        std::istringstream conv(item);
        T v{};
        if (!(conv >> v) || !conv.eof()) throw Error(ErrorCode::ConfigInvalid, "bad list element '" + item + "'");
        out.push_back(v);
    }
    return out;
}

struct AblateFlags {
    std::string windows, ks, ts, offsets;
    int offset_step = 0;
    std::string out = "ablation.csv";
    std::string svg;
    std::string svg_param = "frame_count";

    void add(CLI::App* app) {
        app->add_option("--windows", windows, "Window lengths, e.g. 1,2,4");
        app->add_option("--ks", ks, "every_kth strides");
        app->add_option("--Ts", ts, "Frame counts");
        app->add_option("--offsets", offsets, "Window offsets in seconds");
        app->add_option("--offset-step", offset_step, "Sliding offsets every N source frames");
        app->add_option("--out,-o", out, "Ablation CSV")->capture_default_str();
        app->add_option("--svg", svg, "Accuracy-vs-parameter SVG");
        app->add_option("--svg-param", svg_param, "window_seconds | frame_count | k | window_offset_seconds")
            ->capture_default_str();
    }
};

int cmd_ablate(const std::string& manifest_path, const SamplingFlags& sflags, const ProtocolFlags& pflags,
               const BackendFlags& bflags, const AblateFlags& a) {
    auto cfg = pflags.config(sflags);
    AblationGrid grid;
    grid.window_seconds = parse_list<double>(a.windows);
    grid.k = parse_list<int>(a.ks);
    grid.frame_count = parse_list<int>(a.ts);
    grid.window_offset = parse_list<double>(a.offsets);
    if (a.offset_step > 0) grid.offset_step_frames = a.offset_step;
    const auto manifest = Manifest::load(manifest_path);
    auto backend = bflags.load();
    const auto cells = ablation_sweep(manifest, cfg, grid, bflags.context(backend.get()));
    write_ablation_csv(a.out, cells);
    std::size_t failed = 0;
    std::vector<std::pair<double, double>> pts;
    for (const auto& c : cells) {
        if (!c.report) {
            ++failed;
            log(LogLevel::warn, "cell failed: " + c.error);
            continue;
        }
        double x = c.sampling.frame_count;
        if (a.svg_param == "window_seconds") x = c.sampling.window_seconds;
        else if (a.svg_param == "k") x = c.sampling.k;
        else if (a.svg_param == "window_offset_seconds") x = c.sampling.window_offset_seconds;
        pts.emplace_back(x, c.report->metrics.acc);
    }
    if (!a.svg.empty()) {
        std::sort(pts.begin(), pts.end());
        write_line_svg(a.svg, pts, a.svg_param, "accuracy", "Accuracy vs " + a.svg_param);
    }
    std::cout << dump({{"cells", cells.size()}, {"failed", failed}, {"csv", a.out}}) << '\n';
    return failed ? kExitPartial : kExitOk;
}

int cmd_analyze(const std::string& manifest_path, const std::string& feature, const std::string& out,
                const SamplingFlags& sflags, const BackendFlags& bflags) {
    const auto manifest = Manifest::load(manifest_path);
    auto backend = bflags.load();
    const auto rep = analyze(manifest, sflags.config(), bflags.context(backend.get()), feature, g.workers);
    write_text(out, dump(rep.to_json()));
    return rep.errors.empty() ? kExitOk : kExitPartial;
}

int exit_code_for(ErrorCode code) {
    return code == ErrorCode::ProtocolViolation ? kExitProtocol : kExitConfig;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Real vs generated video detection from embedding-trajectory geometry"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_config("--config", "", "TOML-style key = value file; command-line flags win");
    app.add_option("--seed", g.seed, "Seed for all randomized behavior")->capture_default_str();
    app.add_option("--workers", g.workers, "Per-video worker threads (0 = available parallelism)")
        ->capture_default_str();
    app.add_option("--log-level", g.log_level, "error | warn | info | debug")
        ->check(CLI::IsMember({"error", "warn", "info", "debug"}))
        ->capture_default_str();
    app.add_flag("--pretty", g.pretty, "Indented JSON and human-readable summaries");

    std::vector<std::string> inputs;
    std::string manifest, out, features, model, feature = "mu_theta";
    bool precomputed = false;
    double resample_fps = 0.0;
    SamplingFlags sflags;
    BackendFlags bflags;
    ProtocolFlags pflags;
    EvalOutputs eouts;
    AblateFlags aflags;
    SyntheticDatasetSpec synth;
    std::string synth_generators = "gen_a,gen_b";

    auto* embed = app.add_subcommand("embed", "Encode videos into RSTVEMB1 embedding files");
    embed->add_option("inputs", inputs, "Image directories, raw streams or decodable files");
    embed->add_option("--manifest,-m", manifest, "Embed every manifest record");
    embed->add_option("--out-dir,-o", out, "Output directory")->required();
    embed->add_flag("--precomputed", precomputed, "Inputs are embedding files; resample and re-store only");
    sflags.add(embed);
    bflags.add(embed);

    auto* featurize = app.add_subcommand("featurize", "Geometry features to CSV");
    featurize->add_option("inputs", inputs, "Embedding files (or frame sources with --backend)");
    featurize->add_option("--manifest,-m", manifest, "Featurize every manifest record (labels included)");
    featurize->add_option("--out,-o", out, "Feature CSV")->required();
    featurize->add_option("--resample-fps", resample_fps, "Treat input files as full-rate at this fps");
    sflags.add(featurize);
    bflags.add(featurize);

    auto* trn = app.add_subcommand("train", "Train a classifier");
    trn->add_option("--manifest,-m", manifest, "Manifest (train split is used)");
    trn->add_option("--features,-f", features, "Labelled feature CSV");
    trn->add_option("--out,-o", out, "Model JSON")->required();
    sflags.add(trn);
    pflags.add(trn);
    bflags.add(trn);

    auto* evl = app.add_subcommand("eval", "Run an evaluation protocol");
    evl->add_option("--manifest,-m", manifest, "Manifest");
    evl->add_option("--features,-f", features, "Labelled feature CSV (needs --model)");
    evl->add_option("--model", model, "Pretrained model; trains on the train split when absent");
    eouts.add(evl);
    sflags.add(evl);
    pflags.add(evl);
    bflags.add(evl);

    auto* det = app.add_subcommand("detect", "Score videos: id, score, label, latency_ms");
    det->add_option("inputs", inputs, "Embedding files or frame sources")->required();
    det->add_option("--model", model, "Model JSON")->required();
    det->add_option("--resample-fps", resample_fps, "Treat input files as full-rate at this fps");
    sflags.add(det);
    bflags.add(det);

    auto* afc = app.add_subcommand("2afc", "Matched-pair mean-curvature 2AFC");
    afc->add_option("--manifest,-m", manifest, "Manifest with pair_id")->required();
    afc->add_option("--out,-o", out, "Report JSON (default stdout)");
    sflags.add(afc);
    bflags.add(afc);

    auto* abl = app.add_subcommand("ablate", "Sampling-parameter sweep");
    abl->add_option("--manifest,-m", manifest, "Manifest")->required();
    aflags.add(abl);
    sflags.add(abl);
    pflags.add(abl);
    bflags.add(abl);

    auto* ana = app.add_subcommand("analyze", "Curvature gap, Welch t-test and ANOVA");
    ana->add_option("--manifest,-m", manifest, "Manifest")->required();
    ana->add_option("--feature", feature, "Per-video quantity for the ANOVA")->capture_default_str();
    ana->add_option("--out,-o", out, "Report JSON (default stdout)");
    sflags.add(ana);
    bflags.add(ana);

    auto* syn = app.add_subcommand("synth", "Write a synthetic random-walk dataset");
    syn->add_option("--out-dir,-o", out, "Output directory")->required();
    syn->add_option("--natural", synth.natural, "Natural videos (pairs with --pairs)")->capture_default_str();
    syn->add_option("--per-generator", synth.generated_per_generator, "Generated videos per generator")
        ->capture_default_str();
    syn->add_option("--generators", synth_generators, "Comma-separated generator tags")->capture_default_str();
    syn->add_option("--frames", synth.frames, "Rows per file")->capture_default_str();
    syn->add_option("--dim", synth.dim, "Embedding dimension")->capture_default_str();
    syn->add_option("--angle", synth.natural_angle_deg, "Natural mean turning angle")->capture_default_str();
    syn->add_option("--angle-sd", synth.angle_sd_deg, "Per-step angle sd")->capture_default_str();
    syn->add_option("--gap", synth.gap_deg, "Generated angle increase")->capture_default_str();
    syn->add_option("--spread", synth.generator_spread_deg, "Extra increase per generator index");
    syn->add_option("--train-fraction", synth.train_fraction)->capture_default_str();
    syn->add_option("--source-fps", synth.fps, "Mark files as full-rate sources at this fps");
    syn->add_flag("--pairs", synth.pairs, "Matched pairs for 2AFC");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (embed->parsed()) return cmd_embed(inputs, manifest, out, sflags, bflags, precomputed);
        if (featurize->parsed()) return cmd_featurize(inputs, manifest, out, sflags, bflags, resample_fps);
        if (trn->parsed()) return cmd_train(manifest, features, out, sflags, pflags, bflags);
        if (evl->parsed()) return cmd_eval(manifest, features, model, sflags, pflags, bflags, eouts);
        if (det->parsed()) return cmd_detect(inputs, model, sflags, bflags, resample_fps);
        if (afc->parsed()) return cmd_2afc(manifest, out, sflags, bflags);
        if (abl->parsed()) return cmd_ablate(manifest, sflags, pflags, bflags, aflags);
        if (ana->parsed()) return cmd_analyze(manifest, feature, out, sflags, bflags);
        if (syn->parsed()) {
            synth.generators.clear();
            for (const auto& s : split_list(synth_generators)) synth.generators.push_back(s);
            synth.seed = g.seed;
            const auto m = write_synthetic_dataset(out, synth);
            std::cout << dump({{"manifest", (fs::path(out) / "manifest.jsonl").string()},
                               {"records", m.records.size()}})
                      << '\n';
            return kExitOk;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
