#include "restrav/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "restrav/error.hpp"
#include "restrav/features.hpp"
#include "restrav/parallel.hpp"
#include "restrav/random.hpp"
#include "restrav/stats.hpp"

namespace restrav {
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json errors_json(const std::vector<std::pair<std::string, std::string>>& errors) {
    auto arr = nlohmann::json::array();
    for (const auto& [id, msg] : errors) arr.push_back({{"id", id}, {"error", msg}});
    return arr;
}

bool is_natural(const VideoRecord& r) { return r.label == VideoLabel::natural; }

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

// ---- Manifest -----------------------------------------------------------------------------

std::string to_string(VideoLabel label) { return label == VideoLabel::natural ? "natural" : "generated"; }

VideoLabel video_label_from_string(const std::string& name) {
    if (name == "natural") return VideoLabel::natural;
    if (name == "generated") return VideoLabel::generated;
    throw Error(ErrorCode::ManifestError, "label must be 'natural' or 'generated', got '" + name + "'");
}

VideoRecord VideoRecord::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorCode::ManifestError, "record is not a JSON object");
    auto required_string = [&](const char* key) -> std::string {
        if (!j.contains(key) || !j[key].is_string()) {
            throw Error(ErrorCode::ManifestError, std::string("missing string field '") + key + "'");
        }
        return j[key].get<std::string>();
    };
    auto optional_number = [&](const char* key) -> std::optional<double> {
        if (!j.contains(key) || j[key].is_null()) return std::nullopt;
        if (!j[key].is_number()) throw Error(ErrorCode::ManifestError, std::string("field '") + key + "' must be numeric");
        return j[key].get<double>();
    };

    VideoRecord r;
    r.id = required_string("id");
    r.source = required_string("source");
    r.label = video_label_from_string(required_string("label"));
    r.generator = j.contains("generator") ? j["generator"].get<std::string>()
                                          : (r.label == VideoLabel::natural ? kNaturalGenerator : "");
    r.split = j.contains("split") ? j["split"].get<std::string>() : "test";
    if (r.split != "train" && r.split != "test") {
        throw Error(ErrorCode::ManifestError, "record '" + r.id + "': split must be train or test");
    }
    if (j.contains("pair_id") && !j["pair_id"].is_null()) {
        r.pair_id = j["pair_id"].is_string() ? j["pair_id"].get<std::string>() : j["pair_id"].dump();
    }
    r.fps = optional_number("fps");
    r.duration_s = optional_number("duration_s");
    if (r.fps && !(*r.fps > 0.0)) throw Error(ErrorCode::ManifestError, "record '" + r.id + "': fps must be > 0");
    if ((r.label == VideoLabel::natural) != (r.generator == kNaturalGenerator)) {
        throw Error(ErrorCode::ManifestError,
                    "record '" + r.id + "': label natural requires generator \"natural\" and vice versa");
    }
    static const std::set<std::string> known{"id", "source", "label", "generator", "split", "pair_id", "fps", "duration_s"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) r.extra[key] = value;
    }
    return r;
}

nlohmann::json VideoRecord::to_json() const {
    nlohmann::json j = extra.is_object() ? extra : nlohmann::json::object();
    j["id"] = id;
    j["source"] = source;
    j["label"] = to_string(label);
    j["generator"] = generator;
    j["split"] = split;
    if (pair_id) j["pair_id"] = *pair_id;
    if (fps) j["fps"] = *fps;
    if (duration_s) j["duration_s"] = *duration_s;
    return j;
}

Manifest Manifest::parse(const std::string& text, fs::path base_dir) {
    Manifest m;
    m.base_dir = std::move(base_dir);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto rec = VideoRecord::from_json(nlohmann::json::parse(line));
            if (!ids.insert(rec.id).second) throw Error(ErrorCode::ManifestError, "duplicate id '" + rec.id + "'");
            m.records.push_back(std::move(rec));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::ManifestError, "line " + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(ErrorCode::ManifestError, "line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return m;
}

Manifest Manifest::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ManifestError, "cannot open manifest " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path.parent_path());
}

void Manifest::save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    for (const auto& r : records) out << r.to_json().dump() << '\n';
}

fs::path Manifest::resolve(const VideoRecord& r) const {
    fs::path p(r.source);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

// ---- Protocol config ------------------------------------------------------------------------

std::string to_string(ProtocolMode mode) {
    switch (mode) {
    case ProtocolMode::seen: return "seen";
    case ProtocolMode::unseen: return "unseen";
    case ProtocolMode::future: return "future";
    case ProtocolMode::cross_source: return "cross_source";
    case ProtocolMode::twoafc: return "twoafc";
    case ProtocolMode::ablation: return "ablation";
    }
    return "seen";
}

ProtocolMode protocol_mode_from_string(const std::string& name) {
    for (auto m : {ProtocolMode::seen, ProtocolMode::unseen, ProtocolMode::future, ProtocolMode::cross_source,
                   ProtocolMode::twoafc, ProtocolMode::ablation}) {
        if (to_string(m) == name) return m;
    }
    throw Error(ErrorCode::ConfigInvalid, "unknown protocol mode '" + name + "'");
}

nlohmann::json ProtocolConfig::to_json() const {
    nlohmann::json j;
    j["mode"] = to_string(mode);
    j["train_generators"] = std::vector<std::string>(train_generators.begin(), train_generators.end());
    j["test_generators"] = std::vector<std::string>(test_generators.begin(), test_generators.end());
    j["sampling"] = {{"window_seconds", sampling.window_seconds},
                     {"frame_count", sampling.frame_count},
                     {"window_offset_seconds", sampling.window_offset_seconds},
                     {"mode", to_string(sampling.mode)},
                     {"k", sampling.k}};
    j["classifier"] = to_string(kind);
    j["hyperparameters"] = train_options.to_json(kind);
    j["seed"] = seed;
    if (assumed_encode_ms) j["assumed_encode_ms"] = *assumed_encode_ms;
    return j;
}

void ProtocolConfig::validate() const {
    sampling.validate();
    if (mode == ProtocolMode::unseen || mode == ProtocolMode::future) {
        if (train_generators.empty() || test_generators.empty()) {
            throw Error(ErrorCode::ProtocolViolation,
                        to_string(mode) + " mode needs explicit train and test generator sets");
        }
        for (const auto& g : test_generators) {
            if (train_generators.contains(g)) {
                throw Error(ErrorCode::ProtocolViolation,
                            "generator '" + g + "' appears in both train and test sets in " + to_string(mode) + " mode");
            }
        }
    }
}

// ---- Per-video pipeline ---------------------------------------------------------------------

EmbeddingTrajectory load_trajectory(const Manifest& manifest, const VideoRecord& record,
                                    const SamplingConfig& sampling, const EncodeContext& ctx) {
    const fs::path path = manifest.resolve(record);
    if (!fs::exists(path)) throw Error(ErrorCode::IoError, "source not found: " + path.string());

    if (is_embedding_file(path)) {
        auto traj = load_precomputed(path);
        if (record.fps) {
            const auto plan = plan_samples(traj.frames, *record.fps, sampling);
            traj = traj.select_rows(plan.indices);
            traj.timestamps = plan.timestamps;
        }
        return traj;
    }

    if (!ctx.backend) {
        throw Error(ErrorCode::BackendLoadFailure,
                    "'" + record.id + "' is not an embedding file and no encoder backend is loaded");
    }
    const double fps = record.fps.value_or(ctx.default_fps);
    std::unique_ptr<FrameSource> src;
    if (fs::is_directory(path)) {
        src = std::make_unique<ImageDirectorySource>(path, fps);
    } else if (is_raw_stream_file(path)) {
        src = std::make_unique<RawStreamSource>(path, fps);
    } else if (!ctx.decoder_command.empty()) {
        if (ctx.decoder_width <= 0 || ctx.decoder_height <= 0) {
            throw Error(ErrorCode::ConfigInvalid, "decoder pipe needs a frame width and height");
        }
        src = std::make_unique<DecoderPipeSource>(ctx.decoder_command, path.string(), ctx.decoder_width,
                                                  ctx.decoder_height, fps);
    } else {
        throw Error(ErrorCode::DecodeFailure, "no decoder configured for " + path.string());
    }
    auto frames = sample_frames(*src, sampling, ctx.backend->manifest().input_height);
    frames.source_id = record.id;
    return embed(frames, *ctx.backend);
}

ProcessedSet process_records(const Manifest& manifest, const std::vector<const VideoRecord*>& records,
                             const SamplingConfig& sampling, const EncodeContext& ctx, unsigned workers) {
    ProcessedSet out;
    out.results.resize(records.size());
    std::vector<std::string> failures(records.size());
    // A backend session handles one inference at a time.
    if (ctx.backend) workers = 1;

    parallel_for(records.size(), workers, [&](std::size_t i) {
        const auto& rec = *records[i];
        try {
            VideoResult v;
            v.id = rec.id;
            const auto t0 = Clock::now();
            const auto traj = load_trajectory(manifest, rec, sampling, ctx);
            v.encode_ms = ms_since(t0);
            const auto t1 = Clock::now();
            v.signals = compute_signals(traj);
            v.features = build_feature_vector(v.signals).values;
            v.featurize_ms = ms_since(t1);
            v.mean_curvature = aggregate_stats(v.signals).mu_theta;
            out.results[i] = std::move(v);
        } catch (const std::exception& e) {
            failures[i] = e.what();
            if (failures[i].empty()) failures[i] = "unknown failure";
        }
    });
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!out.results[i]) out.errors.emplace_back(records[i]->id, failures[i]);
    }
    return out;
}

// ---- Reports ----------------------------------------------------------------------------

std::string ids_hash(std::vector<std::string> ids) {
    std::sort(ids.begin(), ids.end());
    std::uint64_t h = fnv1a("");
    for (const auto& id : ids) {
        h = fnv1a(id, h);
        h = fnv1a("\n", h);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json strip_latency(nlohmann::json j) {
    if (j.is_object()) {
        nlohmann::json out = nlohmann::json::object();
        for (auto& [key, value] : j.items()) {
            if (key.find("latency") != std::string::npos) continue;
            out[key] = strip_latency(value);
        }
        return out;
    }
    if (j.is_array()) {
        for (auto& v : j) v = strip_latency(v);
    }
    return j;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["config"] = config;
    j["seed"] = seed;
    auto m = metrics.to_json();
    m.erase("confusion");
    m["map"] = number_or_null(map);
    j["metrics"] = m;
    auto per = nlohmann::json::object();
    for (const auto& [gen, rep] : per_generator) {
        auto g = rep.to_json();
        if (auto it = ap_per_generator.find(gen); it != ap_per_generator.end()) g["ap_vs_natural"] = number_or_null(it->second);
        per[gen] = g;
    }
    j["per_generator"] = per;
    j["confusion"] = {{"tp", metrics.confusion.tp},
                      {"fp", metrics.confusion.fp},
                      {"tn", metrics.confusion.tn},
                      {"fn", metrics.confusion.fn}};
    j["tau_star"] = tau_star;
    j["latency"] = {{"mean_ms", latency.mean_ms},
                    {"encode_mean_ms", latency.encode_mean_ms},
                    {"classify_mean_ms", latency.classify_mean_ms},
                    {"samples", latency.samples}};
    // A pretrained model carries the audit of its own training run.
    const bool inherited = train_ids.empty() && model.train_metadata.contains("train_ids_hash");
    j["audit"] = {{"train_ids_hash", inherited ? model.train_metadata["train_ids_hash"] : nlohmann::json(ids_hash(train_ids))},
                  {"test_ids_hash", ids_hash(test_ids)},
                  {"n_train", inherited ? model.train_metadata.value("n_train", std::size_t{0}) : train_ids.size()},
                  {"n_test", test_ids.size()}};
    j["signal_lengths"] = {{"distances", distance_count}, {"curvatures", curvature_count}};
    j["errors"] = errors_json(errors);
    return j;
}

// ---- Protocols --------------------------------------------------------------------------

ProtocolSplit split_for_protocol(const Manifest& manifest, const ProtocolConfig& cfg) {
    if (cfg.mode == ProtocolMode::twoafc || cfg.mode == ProtocolMode::ablation) {
        throw Error(ErrorCode::ConfigInvalid, to_string(cfg.mode) + " mode runs through its own operation");
    }
    cfg.validate();
    auto admitted = [](const std::set<std::string>& gens, const VideoRecord& r) {
        return is_natural(r) || gens.empty() || gens.contains(r.generator);
    };
    ProtocolSplit s;
    for (const auto& r : manifest.records) {
        if (r.split == "train" && admitted(cfg.train_generators, r)) s.train.push_back(&r);
        if (r.split == "test" && admitted(cfg.test_generators, r)) s.test.push_back(&r);
    }
    if (s.test.empty()) throw Error(ErrorCode::ManifestError, "test split is empty");

    // Audit: no test id, and in held-out modes no test generator, reaches training.
    std::set<std::string> test_ids;
    for (const auto* r : s.test) test_ids.insert(r->id);
    const bool held_out = cfg.mode == ProtocolMode::unseen || cfg.mode == ProtocolMode::future;
    for (const auto* r : s.train) {
        if (test_ids.contains(r->id)) throw Error(ErrorCode::ProtocolViolation, "id '" + r->id + "' is in both splits");
        if (held_out && !is_natural(*r) && cfg.test_generators.contains(r->generator)) {
            throw Error(ErrorCode::ProtocolViolation, "test generator '" + r->generator + "' leaked into training");
        }
    }
    return s;
}

namespace {

struct TrainingSet {
    Matrix x;
    std::vector<int> labels;
    std::vector<std::string> ids;
};

TrainingSet collect(const std::vector<const VideoRecord*>& recs, const ProcessedSet& done) {
    TrainingSet t;
    std::size_t n = 0;
    for (const auto& r : done.results) n += r.has_value();
    t.x = Matrix(n, kFeatureCount);
    std::size_t row = 0;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (!done.results[i]) continue;
        std::copy(done.results[i]->features.begin(), done.results[i]->features.end(), t.x.row(row).begin());
        t.labels.push_back(static_cast<int>(recs[i]->label));
        t.ids.push_back(recs[i]->id);
        ++row;
    }
    return t;
}

ClassifierModel train_on(const Manifest& manifest, const ProtocolConfig& cfg, const EncodeContext& ctx,
                         const std::vector<const VideoRecord*>& train_recs,
                         std::vector<std::pair<std::string, std::string>>& errors, std::vector<std::string>& ids) {
    if (train_recs.empty()) throw Error(ErrorCode::ManifestError, "train split is empty");
    const auto done = process_records(manifest, train_recs, cfg.sampling, ctx, cfg.workers);
    errors.insert(errors.end(), done.errors.begin(), done.errors.end());
    auto set = collect(train_recs, done);
    ids = set.ids;
    auto model = train(cfg.kind, set.x, set.labels, cfg.train_options, cfg.seed);
    model.train_metadata["train_ids_hash"] = ids_hash(set.ids);
    std::set<std::string> used;
    for (std::size_t i = 0; i < train_recs.size(); ++i) {
        if (done.results[i]) used.insert(train_recs[i]->generator);
    }
    model.train_metadata["train_generators_used"] = std::vector<std::string>(used.begin(), used.end());
    return model;
}

}  // namespace

ClassifierModel train_from_manifest(const Manifest& manifest, const ProtocolConfig& cfg, const EncodeContext& ctx,
                                    std::vector<std::pair<std::string, std::string>>* errors) {
    const auto split = split_for_protocol(manifest, cfg);
    std::vector<std::pair<std::string, std::string>> errs;
    std::vector<std::string> ids;
    auto model = train_on(manifest, cfg, ctx, split.train, errs, ids);
    model.train_metadata["protocol"] = cfg.to_json();
    if (errors) *errors = std::move(errs);
    return model;
}

EvalReport run_protocol(const Manifest& manifest, const ProtocolConfig& cfg, const EncodeContext& ctx,
                        const ClassifierModel* pretrained) {
    const auto split = split_for_protocol(manifest, cfg);
    EvalReport rep;
    rep.config = cfg.to_json();
    rep.seed = cfg.seed;

    if (pretrained) {
        const bool held_out = cfg.mode == ProtocolMode::unseen || cfg.mode == ProtocolMode::future;
        const auto& meta = pretrained->train_metadata;
        if (held_out && meta.contains("train_generators_used")) {
            for (const auto& gen : meta["train_generators_used"]) {
                if (cfg.test_generators.contains(gen.get<std::string>())) {
                    throw Error(ErrorCode::ProtocolViolation,
                                "model was trained on test generator '" + gen.get<std::string>() + "'");
                }
            }
        }
        rep.model = *pretrained;
    } else {
        rep.model = train_on(manifest, cfg, ctx, split.train, rep.errors, rep.train_ids);
    }
    rep.tau_star = rep.model.tau_star;

    const auto done = process_records(manifest, split.test, cfg.sampling, ctx, cfg.workers);
    rep.errors.insert(rep.errors.end(), done.errors.begin(), done.errors.end());

    std::vector<std::string> generators;
    std::vector<LatencySample> latency;
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        if (!done.results[i]) continue;
        const auto& v = *done.results[i];
        FeatureVector fv{v.features, v.id};
        const auto pred = predict(rep.model, fv);
        rep.test_scores.push_back(pred.score);
        rep.test_labels.push_back(static_cast<int>(split.test[i]->label));
        rep.test_ids.push_back(v.id);
        generators.push_back(split.test[i]->generator);
        latency.push_back({cfg.assumed_encode_ms.value_or(v.encode_ms), v.featurize_ms + pred.latency_ms});
        rep.distance_count = v.signals.distances.size();
        rep.curvature_count = v.signals.curvatures_deg.size();
    }
    if (rep.test_scores.empty()) throw Error(ErrorCode::ManifestError, "no test video could be processed");

    rep.metrics = compute_metrics(rep.test_scores, rep.test_labels, rep.tau_star);
    rep.latency.samples = latency.size();
    rep.latency.mean_ms = latency_report(latency);
    for (const auto& s : latency) {
        rep.latency.encode_mean_ms += s.encode_ms / static_cast<double>(latency.size());
        rep.latency.classify_mean_ms += s.classify_ms / static_cast<double>(latency.size());
    }
    rep.metrics.latency_ms_mean = rep.latency.mean_ms;

    // Per generator: that generator's videos against every natural test video.
    std::set<std::string> gens;
    for (std::size_t i = 0; i < generators.size(); ++i) {
        if (rep.test_labels[i] == 1) gens.insert(generators[i]);
    }
    const bool has_natural = std::find(rep.test_labels.begin(), rep.test_labels.end(), 0) != rep.test_labels.end();
    for (const auto& g : gens) {
        std::vector<double> s;
        std::vector<int> y;
        double lat = 0.0;
        for (std::size_t i = 0; i < generators.size(); ++i) {
            if (rep.test_labels[i] == 0 || generators[i] == g) {
                s.push_back(rep.test_scores[i]);
                y.push_back(rep.test_labels[i]);
                lat += latency[i].encode_ms + latency[i].classify_ms;
            }
        }
        auto m = compute_metrics(s, y, rep.tau_star);
        m.latency_ms_mean = lat / static_cast<double>(s.size());
        rep.per_generator[g] = m;
    }
    if (!gens.empty() && has_natural) {
        const auto mr = map_over_generators(rep.test_scores, rep.test_labels, generators);
        rep.map = mr.map;
        rep.ap_per_generator = mr.per_generator;
    } else {
        rep.map = std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

// ---- 2AFC -------------------------------------------------------------------------------

nlohmann::json TwoAfcReport::to_json() const {
    nlohmann::json j;
    j["accuracy"] = number_or_null(accuracy);
    auto per = nlohmann::json::object();
    for (const auto& [g, acc] : per_generator) per[g] = {{"accuracy", acc}, {"pairs", pairs_per_generator.at(g)}};
    j["per_generator"] = per;
    auto arr = nlohmann::json::array();
    for (const auto& p : pairs) {
        arr.push_back({{"pair_id", p.pair_id},
                       {"natural_id", p.natural_id},
                       {"generated_id", p.generated_id},
                       {"generator", p.generator},
                       {"natural_mean_curvature", p.natural_curvature},
                       {"generated_mean_curvature", p.generated_curvature},
                       {"credit", p.credit}});
    }
    j["pairs"] = arr;
    j["errors"] = errors_json(errors);
    return j;
}

TwoAfcReport score_2afc(const std::vector<const VideoRecord*>& records, const std::vector<double>& mean_curvatures,
                        TwoAfcRule rule) {
    if (records.size() != mean_curvatures.size()) throw Error(ErrorCode::LengthMismatch, "curvatures per record");
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i]->pair_id) throw Error(ErrorCode::UnpairedRecord, "record '" + records[i]->id + "' has no pair_id");
        groups[*records[i]->pair_id].push_back(i);
    }
    TwoAfcReport rep;
    std::map<std::string, double> credit_sum;
    double total = 0.0;
    for (const auto& [pid, members] : groups) {
        if (members.size() != 2 || is_natural(*records[members[0]]) == is_natural(*records[members[1]])) {
            throw Error(ErrorCode::UnpairedRecord,
                        "pair '" + pid + "' needs exactly one natural and one generated member");
        }
        const auto nat = is_natural(*records[members[0]]) ? members[0] : members[1];
        const auto gen = nat == members[0] ? members[1] : members[0];
        TwoAfcPair p{pid, records[nat]->id, records[gen]->id, records[gen]->generator,
                     mean_curvatures[nat], mean_curvatures[gen], 0.0};
        if (std::isnan(p.natural_curvature) || std::isnan(p.generated_curvature)) {
            rep.errors.emplace_back(pid, "pair member could not be processed");
            continue;
        }
        if (p.generated_curvature == p.natural_curvature) {
            p.credit = 0.5;
        } else {
            const bool gen_higher = p.generated_curvature > p.natural_curvature;
            const bool correct = rule == TwoAfcRule::higher_curvature_is_generated ? gen_higher : !gen_higher;
            p.credit = correct ? 1.0 : 0.0;
        }
        credit_sum[p.generator] += p.credit;
        rep.pairs_per_generator[p.generator] += 1;
        total += p.credit;
        rep.pairs.push_back(std::move(p));
    }
    if (rep.pairs.empty()) throw Error(ErrorCode::UnpairedRecord, "no scorable matched pairs");
    for (const auto& [g, sum] : credit_sum) {
        rep.per_generator[g] = sum / static_cast<double>(rep.pairs_per_generator[g]);
    }
    rep.accuracy = total / static_cast<double>(rep.pairs.size());
    return rep;
}

TwoAfcReport run_2afc(const Manifest& manifest, const SamplingConfig& sampling, const EncodeContext& ctx,
                      unsigned workers, TwoAfcRule rule) {
    std::vector<const VideoRecord*> recs;
    for (const auto& r : manifest.records) recs.push_back(&r);
    if (recs.empty()) throw Error(ErrorCode::ManifestError, "manifest is empty");
    // Pairing is checked before any work is done.
    std::vector<double> placeholder(recs.size(), 0.0);
    score_2afc(recs, placeholder, rule);

    const auto done = process_records(manifest, recs, sampling, ctx, workers);
    std::vector<double> curv(recs.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (done.results[i]) curv[i] = done.results[i]->mean_curvature;
    }
    auto rep = score_2afc(recs, curv, rule);
    rep.errors.insert(rep.errors.begin(), done.errors.begin(), done.errors.end());
    return rep;
}

// ---- Analysis ---------------------------------------------------------------------------

double analysis_value(const VideoResult& v, const std::string& feature) {
    const auto names = feature_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == feature) return v.features.at(i);
    }
    throw Error(ErrorCode::ConfigInvalid, "unknown analysis feature '" + feature + "'");
}

nlohmann::json AnalysisReport::to_json() const {
    nlohmann::json j;
    j["delta_theta"] = number_or_null(delta_theta);
    j["t_statistic"] = number_or_null(t_statistic);
    j["p_value"] = number_or_null(p_value);
    j["df"] = number_or_null(df);
    j["anova"] = {{"feature", anova_feature}, {"f_statistic", number_or_null(f_statistic)},
                  {"p_value", number_or_null(f_p_value)}};
    auto groups = nlohmann::json::object();
    for (const auto& [g, m] : group_means) groups[g] = {{"mean", m}, {"n", group_sizes.at(g)}};
    j["group_means"] = groups;
    j["errors"] = errors_json(errors);
    return j;
}

AnalysisReport analyze(const Manifest& manifest, const SamplingConfig& sampling, const EncodeContext& ctx,
                       const std::string& anova_feature, unsigned workers) {
    sampling.validate();
    {
        VideoResult probe;
        probe.features.assign(kFeatureCount, 0.0);
        analysis_value(probe, anova_feature);  // rejects unknown names before any work
    }
    std::vector<const VideoRecord*> recs;
    for (const auto& r : manifest.records) recs.push_back(&r);
    const auto done = process_records(manifest, recs, sampling, ctx, workers);

    AnalysisReport rep;
    rep.anova_feature = anova_feature;
    rep.errors = done.errors;
    std::vector<double> nat, gen;
    std::map<std::string, std::vector<double>> groups;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        if (!done.results[i]) continue;
        const auto& v = *done.results[i];
        (is_natural(*recs[i]) ? nat : gen).push_back(v.mean_curvature);
        groups[recs[i]->generator].push_back(analysis_value(v, anova_feature));
    }
    rep.delta_theta = curvature_gap(nat, gen);
    const auto t = welch_ttest(nat, gen);
    rep.t_statistic = t.t;
    rep.p_value = t.p;
    rep.df = t.df;

    std::vector<std::vector<double>> anova_groups;
    for (const auto& [g, values] : groups) {
        double s = 0.0;
        for (double x : values) s += x;
        rep.group_means[g] = s / static_cast<double>(values.size());
        rep.group_sizes[g] = values.size();
        if (values.size() >= 2) anova_groups.push_back(values);
        else rep.errors.emplace_back(g, "group excluded from ANOVA: fewer than 2 videos");
    }
    if (anova_groups.size() >= 2) {
        const auto a = one_way_anova(anova_groups);
        rep.f_statistic = a.f;
        rep.f_p_value = a.p;
    } else {
        rep.f_statistic = rep.f_p_value = std::numeric_limits<double>::quiet_NaN();
    }
    return rep;
}

// ---- Ablation ---------------------------------------------------------------------------

bool AblationGrid::empty() const {
    return window_seconds.empty() && k.empty() && frame_count.empty() && window_offset.empty() &&
           !offset_step_frames;
}

std::uint64_t cell_seed(std::uint64_t master, const SamplingConfig& c) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%llu|%.17g|%d|%.17g|%s|%d", static_cast<unsigned long long>(master),
                  c.window_seconds, c.frame_count, c.window_offset_seconds, to_string(c.mode).c_str(), c.k);
    return fnv1a(buf);
}

namespace {

// Shortest source duration and its fps, for sliding-offset grids.
std::pair<double, double> shortest_source(const Manifest& manifest) {
    double duration = std::numeric_limits<double>::infinity();
    double fps = 0.0;
    for (const auto& r : manifest.records) {
        if (!r.fps) continue;
        double d = 0.0;
        if (r.duration_s) {
            d = *r.duration_s;
        } else {
            const auto path = manifest.resolve(r);
            if (!is_embedding_file(path)) continue;
            d = static_cast<double>(load_precomputed(path).frames) / *r.fps;
        }
        if (d < duration) {
            duration = d;
            fps = *r.fps;
        }
    }
    if (fps == 0.0) throw Error(ErrorCode::ConfigInvalid, "sliding offsets need records with fps");
    return {duration, fps};
}

}  // namespace

std::vector<AblationCell> ablation_sweep(const Manifest& manifest, const ProtocolConfig& base,
                                         const AblationGrid& grid, const EncodeContext& ctx) {
    if (grid.empty()) throw Error(ErrorCode::ConfigInvalid, "ablation grid is empty");
    auto or_base = [](auto values, auto fallback) {
        return values.empty() ? decltype(values){fallback} : values;
    };
    const auto windows = or_base(grid.window_seconds, base.sampling.window_seconds);
    const auto ks = or_base(grid.k, base.sampling.k);
    const auto ts = or_base(grid.frame_count, base.sampling.frame_count);

    std::vector<AblationCell> cells;
    for (double w : windows) {
        std::vector<double> offsets = grid.window_offset;
        if (grid.offset_step_frames) {
            const auto [duration, fps] = shortest_source(manifest);
            offsets = sliding_offsets(duration, w, fps, *grid.offset_step_frames);
        }
        if (offsets.empty()) offsets.push_back(base.sampling.window_offset_seconds);
        for (int k : ks) {
            for (int t : ts) {
                for (double off : offsets) {
                    AblationCell c;
                    c.sampling = base.sampling;
                    c.sampling.window_seconds = w;
                    c.sampling.k = k;
                    c.sampling.frame_count = t;
                    c.sampling.window_offset_seconds = off;
                    c.seed = cell_seed(base.seed, c.sampling);
                    cells.push_back(std::move(c));
                }
            }
        }
    }

    // Cells are independent; without a backend they run in parallel, one worker each.
    const unsigned outer = ctx.backend ? 1u : resolve_workers(base.workers);
    parallel_for(cells.size(), outer, [&](std::size_t i) {
        auto& c = cells[i];
        ProtocolConfig cfg = base;
        cfg.mode = base.mode == ProtocolMode::ablation ? ProtocolMode::seen : base.mode;
        cfg.sampling = c.sampling;
        cfg.seed = c.seed;
        cfg.workers = outer > 1 ? 1u : base.workers;
        try {
            c.report = run_protocol(manifest, cfg, ctx);
        } catch (const std::exception& e) {
            c.error = e.what();
        }
    });
    return cells;
}

void write_ablation_csv(const fs::path& path, const std::vector<AblationCell>& cells) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << "window_seconds,frame_count,k,window_offset_seconds,mode,seed,status,n_test,distances,curvatures,"
           "acc,balanced_acc,auroc,ap,f1_gen,map,tau_star,errors,message\n";
    auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string(); };
    auto quote = [](const std::string& s) {
        std::string q = "\"";
        for (char ch : s) {
            if (ch == '"') q += '"';
            q += (ch == '\n' ? ' ' : ch);
        }
        return q + "\"";
    };
    for (const auto& c : cells) {
        out << num(c.sampling.window_seconds) << ',' << c.sampling.frame_count << ',' << c.sampling.k << ','
            << num(c.sampling.window_offset_seconds) << ',' << to_string(c.sampling.mode) << ',' << c.seed << ',';
        if (c.report) {
            const auto& r = *c.report;
            out << "ok," << r.test_ids.size() << ',' << r.distance_count << ',' << r.curvature_count << ','
                << num(r.metrics.acc) << ',' << num(r.metrics.balanced_acc) << ',' << num(r.metrics.auroc) << ','
                << num(r.metrics.ap) << ',' << num(r.metrics.f1_gen) << ',' << num(r.map) << ',' << num(r.tau_star)
                << ',' << r.errors.size() << ",\n";
        } else {
            out << "error" << std::string(11, ',') << 0 << ',' << quote(c.error) << '\n';
        }
    }
}

// ---- SVG --------------------------------------------------------------------------------

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char ch : s) {
        switch (ch) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        default: out += ch;
        }
    }
    return out;
}

void write_plot(const fs::path& path, const std::vector<std::pair<double, double>>& pts, double x0, double x1,
                double y0, double y1, const std::string& x_label, const std::string& y_label,
                const std::string& title, bool diagonal) {
    constexpr double W = 480, H = 400, L = 60, R = 20, T = 40, B = 50;
    if (x1 <= x0) x1 = x0 + 1.0;
    if (y1 <= y0) y1 = y0 + 1.0;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    char buf[160];
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n",
                  L, T, W - L - R, H - T - B);
    out << buf;
    for (int i = 0; i <= 4; ++i) {
        const double fx = x0 + (x1 - x0) * i / 4.0, fy = y0 + (y1 - y0) * i / 4.0;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" text-anchor=\"middle\">%.3g</text>\n",
                      px(fx), H - B + 14, fx);
        out << buf;
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" text-anchor=\"end\">%.3g</text>\n",
                      L - 4, py(fy) + 3, fy);
        out << buf;
    }
    if (diagonal) {
        std::snprintf(buf, sizeof buf,
                      "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"gray\" stroke-dasharray=\"4\"/>\n",
                      px(x0), py(y0), px(x1), py(y1));
        out << buf;
    }
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) {
        std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x), py(y));
        out << buf;
    }
    out << "\"/>\n";
    for (const auto& [x, y] : pts) {
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"steelblue\"/>\n", px(x), py(y));
        out << buf;
    }
    out << "<text x=\"" << W / 2 << "\" y=\"24\" font-size=\"14\" text-anchor=\"middle\">" << xml_escape(title)
        << "</text>\n"
        << "<text x=\"" << W / 2 << "\" y=\"" << H - 12 << "\" font-size=\"12\" text-anchor=\"middle\">"
        << xml_escape(x_label) << "</text>\n"
        << "<text x=\"16\" y=\"" << H / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
        << H / 2 << ")\">" << xml_escape(y_label) << "</text>\n"
        << "</svg>\n";
}

}  // namespace

void write_roc_svg(const fs::path& path, const std::vector<CurvePoint>& roc, const std::string& title) {
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : roc) pts.emplace_back(p.x, p.y);
    write_plot(path, pts, 0.0, 1.0, 0.0, 1.0, "false positive rate", "true positive rate", title, true);
}

void write_line_svg(const fs::path& path, const std::vector<std::pair<double, double>>& points,
                    const std::string& x_label, const std::string& y_label, const std::string& title) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& [x, y] : points) {
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
    }
    if (points.empty()) x0 = y0 = 0.0, x1 = y1 = 1.0;
    write_plot(path, points, x0, x1, std::min(y0, 0.0), std::max(y1, 1.0), x_label, y_label, title, false);
}

}  // namespace restrav
