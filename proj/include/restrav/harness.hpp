#pragma once

// Manifests, evaluation protocols, matched-pair 2AFC, statistical analysis and
// ablation sweeps.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "restrav/classifiers.hpp"
#include "restrav/encoder.hpp"
#include "restrav/geometry.hpp"
#include "restrav/ingest.hpp"
#include "restrav/metrics.hpp"

namespace restrav {

inline constexpr const char* kNaturalGenerator = "natural";

std::string to_string(VideoLabel label);
VideoLabel video_label_from_string(const std::string& name);

struct VideoRecord {
    std::string id;
    std::string source;                 // relative paths resolve against the manifest directory
    VideoLabel label = VideoLabel::natural;
    std::string generator = kNaturalGenerator;
    std::string split = "test";         // train | test
    std::optional<std::string> pair_id;
    std::optional<double> fps;          // present: source is full-rate and gets resampled
    std::optional<double> duration_s;
    nlohmann::json extra = nlohmann::json::object();  // unknown fields, written back verbatim

    static VideoRecord from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct Manifest {
    std::filesystem::path base_dir;
    std::vector<VideoRecord> records;

    // JSON Lines; blank lines skipped. Throws ManifestError with the line number.
    static Manifest load(const std::filesystem::path& path);
    static Manifest parse(const std::string& text, std::filesystem::path base_dir = {});
    void save(const std::filesystem::path& path) const;
    std::filesystem::path resolve(const VideoRecord& r) const;
};

enum class ProtocolMode { seen, unseen, future, cross_source, twoafc, ablation };
std::string to_string(ProtocolMode mode);
ProtocolMode protocol_mode_from_string(const std::string& name);

struct ProtocolConfig {
    ProtocolMode mode = ProtocolMode::seen;
    std::set<std::string> train_generators;  // empty in seen/cross_source: all
    std::set<std::string> test_generators;
    SamplingConfig sampling;
    ClassifierKind kind = ClassifierKind::mlp;
    std::uint64_t seed = 0;
    TrainOptions train_options;
    // Fixed per-video encode cost for latency accounting when running from embeddings.
    std::optional<double> assumed_encode_ms;
    unsigned workers = 0;  // 0: available parallelism

    nlohmann::json to_json() const;
    void validate() const;
};

// How non-embedding sources become trajectories.
struct EncodeContext {
    EncoderBackend* backend = nullptr;  // required for frame sources
    double default_fps = 30.0;          // image directories without a manifest fps
    std::string decoder_command;        // decoder pipe template with {input}
    int decoder_width = 0;
    int decoder_height = 0;
};

// Loads or encodes one record's trajectory and applies the sampling config.
// Embedding files with a manifest fps are resampled with plan_samples; without fps
// they are taken as already sampled.
EmbeddingTrajectory load_trajectory(const Manifest& manifest, const VideoRecord& record,
                                    const SamplingConfig& sampling, const EncodeContext& ctx);

struct VideoResult {
    std::string id;
    GeometrySignals signals;
    std::vector<double> features;
    double mean_curvature = 0.0;
    double encode_ms = 0.0;
    double featurize_ms = 0.0;
};

struct ProcessedSet {
    std::vector<std::optional<VideoResult>> results;  // parallel to the input records
    std::vector<std::pair<std::string, std::string>> errors;  // (id, message)
};

// Per-video ingest, encode, geometry and features on a worker pool. Failures are
// collected, never thrown.
ProcessedSet process_records(const Manifest& manifest, const std::vector<const VideoRecord*>& records,
                             const SamplingConfig& sampling, const EncodeContext& ctx, unsigned workers);

struct LatencyStats {
    double mean_ms = 0.0;
    double encode_mean_ms = 0.0;
    double classify_mean_ms = 0.0;
    std::size_t samples = 0;
};

struct EvalReport {
    nlohmann::json config;
    std::uint64_t seed = 0;
    MetricsReport metrics;
    double map = 0.0;
    std::map<std::string, MetricsReport> per_generator;
    std::map<std::string, double> ap_per_generator;
    double tau_star = 0.5;
    LatencyStats latency;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
    std::vector<std::pair<std::string, std::string>> errors;
    std::size_t distance_count = 0;   // per-video signal lengths (T-1, T-2)
    std::size_t curvature_count = 0;
    std::vector<double> test_scores;
    std::vector<int> test_labels;
    ClassifierModel model;

    nlohmann::json to_json() const;
};

// Order-independent audit hash (FNV-1a 64 over sorted ids), hex.
std::string ids_hash(std::vector<std::string> ids);

// Removes latency keys recursively; what remains is deterministic for a fixed seed.
nlohmann::json strip_latency(nlohmann::json j);

// Train on the train split, evaluate on the test split. With a pretrained model the
// training stage is skipped. Throws ManifestError, ProtocolViolation.
EvalReport run_protocol(const Manifest& manifest, const ProtocolConfig& cfg, const EncodeContext& ctx,
                        const ClassifierModel* pretrained = nullptr);

// Train-split selection alone (used by cmd_train); enforces the same guards.
struct ProtocolSplit {
    std::vector<const VideoRecord*> train;
    std::vector<const VideoRecord*> test;
};
ProtocolSplit split_for_protocol(const Manifest& manifest, const ProtocolConfig& cfg);

ClassifierModel train_from_manifest(const Manifest& manifest, const ProtocolConfig& cfg, const EncodeContext& ctx,
                                    std::vector<std::pair<std::string, std::string>>* errors = nullptr);

enum class TwoAfcRule { higher_curvature_is_generated, lower_curvature_is_generated };

struct TwoAfcPair {
    std::string pair_id;
    std::string natural_id;
    std::string generated_id;
    std::string generator;
    double natural_curvature = 0.0;
    double generated_curvature = 0.0;
    double credit = 0.0;  // 1 correct, 0 wrong, 0.5 tie
};

struct TwoAfcReport {
    double accuracy = 0.0;
    std::map<std::string, double> per_generator;
    std::map<std::string, std::size_t> pairs_per_generator;
    std::vector<TwoAfcPair> pairs;
    std::vector<std::pair<std::string, std::string>> errors;

    nlohmann::json to_json() const;
};

// Score matched pairs from precomputed mean curvatures. Throws UnpairedRecord.
TwoAfcReport score_2afc(const std::vector<const VideoRecord*>& records, const std::vector<double>& mean_curvatures,
                        TwoAfcRule rule = TwoAfcRule::higher_curvature_is_generated);

TwoAfcReport run_2afc(const Manifest& manifest, const SamplingConfig& sampling, const EncodeContext& ctx,
                      unsigned workers = 0, TwoAfcRule rule = TwoAfcRule::higher_curvature_is_generated);

struct AnalysisReport {
    double delta_theta = 0.0;
    double t_statistic = 0.0;  // Welch, natural vs generated per-video mean curvature
    double p_value = 1.0;
    double df = 0.0;
    double f_statistic = 0.0;  // one-way ANOVA across generator groups (natural included)
    double f_p_value = 1.0;
    std::string anova_feature;
    std::map<std::string, double> group_means;
    std::map<std::string, std::size_t> group_sizes;
    std::vector<std::pair<std::string, std::string>> errors;

    nlohmann::json to_json() const;
};

// Named per-video quantity used for ANOVA grouping: mu_theta (default) or any
// feature name, e.g. "var_d" or "d3".
double analysis_value(const VideoResult& v, const std::string& feature);

AnalysisReport analyze(const Manifest& manifest, const SamplingConfig& sampling, const EncodeContext& ctx,
                       const std::string& anova_feature = "mu_theta", unsigned workers = 0);

struct AblationGrid {
    std::vector<double> window_seconds;
    std::vector<int> k;
    std::vector<int> frame_count;
    std::vector<double> window_offset;  // explicit offsets
    std::optional<int> offset_step_frames;  // sliding offsets instead; needs source duration

    bool empty() const;
};

struct AblationCell {
    SamplingConfig sampling;
    std::uint64_t seed = 0;
    std::optional<EvalReport> report;
    std::string error;
};

std::uint64_t cell_seed(std::uint64_t master, const SamplingConfig& cell);

// One protocol run per grid cell; per-cell errors are recorded, not thrown.
std::vector<AblationCell> ablation_sweep(const Manifest& manifest, const ProtocolConfig& base,
                                         const AblationGrid& grid, const EncodeContext& ctx);
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationCell>& cells);

// Static plots.
void write_roc_svg(const std::filesystem::path& path, const std::vector<CurvePoint>& roc, const std::string& title);
void write_line_svg(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& points,
                    const std::string& x_label, const std::string& y_label, const std::string& title);

}  // namespace restrav
