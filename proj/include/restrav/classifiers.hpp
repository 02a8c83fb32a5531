#pragma once

// Lightweight binary classifiers over feature vectors. Label 1 = generated (positive).

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "restrav/features.hpp"
#include "restrav/matrix.hpp"

namespace restrav {

enum class ClassifierKind { logistic_regression, gaussian_nb, mlp };

std::string to_string(ClassifierKind kind);           // "LR", "GNB", "MLP"
ClassifierKind classifier_kind_from_string(const std::string& name);

inline constexpr int kModelFormatVersion = 1;

double sigmoid(double z) noexcept;

struct Standardizer {
    static constexpr double kStdFloor = 1e-8;

    std::vector<double> mean;
    std::vector<double> std;

    static Standardizer fit(const Matrix& x);
    static Standardizer identity(std::size_t n);

    std::vector<double> apply(std::span<const double> x) const;
    std::vector<double> invert(std::span<const double> z) const;
    Matrix apply(const Matrix& x) const;
};

struct LogisticParams {
    std::vector<double> weights;
    double bias = 0.0;

    double logit(std::span<const double> x) const;
};

struct GaussianNbParams {
    std::array<double, 2> priors{0.5, 0.5};
    std::array<std::vector<double>, 2> means;
    std::array<std::vector<double>, 2> variances;

    // Per-class log p(x | c) + log prior.
    std::array<double, 2> joint_log_likelihood(std::span<const double> x) const;
};

struct DenseLayer {
    std::size_t inputs = 0;
    std::size_t outputs = 0;
    std::vector<double> weights;  // outputs x inputs, row-major
    std::vector<double> bias;
};

// ReLU hidden layers, linear output unit (sigmoid applied by the caller).
struct MlpParams {
    std::vector<DenseLayer> layers;

    double logit(std::span<const double> x) const;
    std::size_t parameter_count() const;
    // Flattened [W0, b0, W1, b1, ...] accessors for optimisers and gradient checks.
    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);
};

inline constexpr std::array<std::size_t, 4> kMlpShape{kFeatureCount, 64, 32, 1};

// He-uniform weights, zero biases.
MlpParams init_mlp(std::span<const std::size_t> sizes, std::uint64_t seed);

// Mean binary cross-entropy (with logits) over the rows of x. When grad is non-null it
// receives d loss / d params with the same shapes as params.
double mlp_loss(const MlpParams& params, const Matrix& x, std::span<const int> labels, MlpParams* grad);

struct TrainOptions {
    // LR
    double l2 = 1e-4;
    int lr_max_iterations = 5000;
    double lr_gradient_tolerance = 1e-8;
    // GNB
    double gnb_var_smoothing = 1e-9;
    // MLP
    double mlp_learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::size_t mlp_batch_size = 256;
    int mlp_epochs = 200;

    nlohmann::json to_json(ClassifierKind kind) const;
};

struct LogisticFit {
    LogisticParams params;
    std::vector<double> loss_history;  // regularised loss before each accepted step, plus final
    int iterations = 0;
    bool converged = false;
};

double logistic_loss(const LogisticParams& params, const Matrix& x, std::span<const int> labels, double l2,
                     LogisticParams* grad);
LogisticFit fit_logistic(const Matrix& x, std::span<const int> labels, const TrainOptions& opt);

GaussianNbParams fit_gaussian_nb(const Matrix& x, std::span<const int> labels, double var_smoothing);

struct MlpFit {
    MlpParams params;
    std::vector<double> epoch_loss;  // full-training-set loss after each epoch
    double initial_loss = 0.0;
};

MlpFit fit_mlp(const Matrix& x, std::span<const int> labels, const TrainOptions& opt, std::uint64_t seed);

struct ClassifierModel {
    ClassifierKind kind = ClassifierKind::mlp;
    std::variant<LogisticParams, GaussianNbParams, MlpParams> params;
    double tau_star = 0.5;
    Standardizer standardizer;
    std::string feature_layout = restrav::feature_layout();
    std::uint64_t train_seed = 0;
    nlohmann::json train_metadata = nlohmann::json::object();

    // Probability of "generated" for a raw (unstandardised) feature vector.
    double score(std::span<const double> raw) const;
    double score_standardized(std::span<const double> z) const;
};

enum class VideoLabel { natural = 0, generated = 1 };

struct Prediction {
    double score = 0.0;
    VideoLabel label = VideoLabel::natural;
    double latency_ms = 0.0;
};

// Fits the standardiser, the model and tau*. Deterministic for a given seed.
// Throws DegenerateData when either class has fewer than 2 examples.
ClassifierModel train(ClassifierKind kind, const Matrix& x, std::span<const int> labels,
                      const TrainOptions& opt, std::uint64_t seed,
                      const std::string& layout = restrav::feature_layout());

// label == generated iff score >= tau*. Throws LayoutMismatch.
Prediction predict(const ClassifierModel& model, const FeatureVector& y,
                   std::string_view layout = {});

// F1-optimal threshold for the positive class over midpoints of sorted unique scores,
// plus the minimum score (everything positive) and a value above the maximum.
// Ties go to the larger threshold.
double select_threshold(std::span<const double> scores, std::span<const int> labels);

double f1_at(std::span<const double> scores, std::span<const int> labels, double tau);

nlohmann::json to_json(const ClassifierModel& model);
ClassifierModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const ClassifierModel& model);
ClassifierModel load_model(const std::filesystem::path& path);

}  // namespace restrav
