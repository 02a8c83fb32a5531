#include "restrav/classifiers.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "restrav/error.hpp"
#include "restrav/random.hpp"

namespace restrav {
namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Binary cross-entropy from a logit: -y log s(z) - (1-y) log(1 - s(z)).
double bce_with_logit(double z, int y) { return softplus(z) - (y == 1 ? z : 0.0); }

void check_training_data(const Matrix& x, std::span<const int> labels) {
    if (x.rows != labels.size()) throw Error(ErrorCode::LengthMismatch, "feature rows != label count");
    std::size_t pos = 0, neg = 0;
    for (int y : labels) {
        if (y == 1) ++pos;
        else if (y == 0) ++neg;
        else throw Error(ErrorCode::DegenerateData, "labels must be 0 or 1");
    }
    if (pos < 2 || neg < 2) {
        throw Error(ErrorCode::DegenerateData, "need >= 2 examples per class, got " + std::to_string(neg) +
                                                   " natural and " + std::to_string(pos) + " generated");
    }
    for (double v : x.data) {
        if (!std::isfinite(v)) throw Error(ErrorCode::DegenerateData, "non-finite feature value");
    }
}

double clamp_open_unit(double tau) {
    return std::clamp(tau, std::nextafter(0.0, 1.0), std::nextafter(1.0, 0.0));
}

}  // namespace

std::string to_string(ClassifierKind kind) {
    switch (kind) {
    case ClassifierKind::logistic_regression: return "LR";
    case ClassifierKind::gaussian_nb: return "GNB";
    case ClassifierKind::mlp: return "MLP";
    }
    return "MLP";
}

ClassifierKind classifier_kind_from_string(const std::string& name) {
    std::string up = name;
    std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return std::toupper(c); });
    if (up == "LR") return ClassifierKind::logistic_regression;
    if (up == "GNB") return ClassifierKind::gaussian_nb;
    if (up == "MLP") return ClassifierKind::mlp;
    throw Error(ErrorCode::ConfigInvalid, "unknown classifier kind '" + name + "' (expected LR, GNB or MLP)");
}

double sigmoid(double z) noexcept {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// ---- Standardizer ---------------------------------------------------------------------

Standardizer Standardizer::fit(const Matrix& x) {
    if (x.rows == 0) throw Error(ErrorCode::DegenerateData, "cannot standardise an empty matrix");
    Standardizer s;
    s.mean.assign(x.cols, 0.0);
    s.std.assign(x.cols, 0.0);
    const double n = static_cast<double>(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) s.mean[c] += x(r, c);
    }
    for (auto& m : s.mean) m /= n;
    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t c = 0; c < x.cols; ++c) {
            const double d = x(r, c) - s.mean[c];
            s.std[c] += d * d;
        }
    }
    for (auto& v : s.std) v = std::max(std::sqrt(v / n), kStdFloor);
    return s;
}

Standardizer Standardizer::identity(std::size_t n) {
    Standardizer s;
    s.mean.assign(n, 0.0);
    s.std.assign(n, 1.0);
    return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
    if (x.size() != mean.size()) throw Error(ErrorCode::LayoutMismatch, "feature width != standardiser width");
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - mean[i]) / std[i];
    return z;
}

std::vector<double> Standardizer::invert(std::span<const double> z) const {
    if (z.size() != mean.size()) throw Error(ErrorCode::LayoutMismatch, "feature width != standardiser width");
    std::vector<double> x(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) x[i] = z[i] * std[i] + mean[i];
    return x;
}

Matrix Standardizer::apply(const Matrix& x) const {
    Matrix z(x.rows, x.cols);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const auto row = apply(x.row(r));
        std::copy(row.begin(), row.end(), z.row(r).begin());
    }
    return z;
}

// ---- Logistic regression ----------------------------------------------------------------

double LogisticParams::logit(std::span<const double> x) const {
    double z = bias;
    for (std::size_t i = 0; i < weights.size(); ++i) z += weights[i] * x[i];
    return z;
}

double logistic_loss(const LogisticParams& params, const Matrix& x, std::span<const int> labels, double l2,
                     LogisticParams* grad) {
    const double n = static_cast<double>(x.rows);
    double loss = 0.0;
    if (grad) {
        grad->weights.assign(params.weights.size(), 0.0);
        grad->bias = 0.0;
    }
    for (std::size_t r = 0; r < x.rows; ++r) {
        const auto row = x.row(r);
        const double z = params.logit(row);
        loss += bce_with_logit(z, labels[r]);
        if (grad) {
            const double err = sigmoid(z) - labels[r];
            for (std::size_t c = 0; c < row.size(); ++c) grad->weights[c] += err * row[c];
            grad->bias += err;
        }
    }
    loss /= n;
    double wsq = 0.0;
    for (double w : params.weights) wsq += w * w;
    loss += 0.5 * l2 * wsq;
    if (grad) {
        for (std::size_t c = 0; c < grad->weights.size(); ++c) {
            grad->weights[c] = grad->weights[c] / n + l2 * params.weights[c];
        }
        grad->bias /= n;
    }
    return loss;
}

// Full-batch gradient descent with Armijo backtracking; the accepted loss never increases.
LogisticFit fit_logistic(const Matrix& x, std::span<const int> labels, const TrainOptions& opt) {
    LogisticFit fit;
    fit.params.weights.assign(x.cols, 0.0);
    LogisticParams grad;
    double loss = logistic_loss(fit.params, x, labels, opt.l2, &grad);
    double step = 1.0;
    constexpr double kArmijo = 1e-4;
    for (fit.iterations = 0; fit.iterations < opt.lr_max_iterations; ++fit.iterations) {
        double gsq = grad.bias * grad.bias;
        for (double g : grad.weights) gsq += g * g;
        fit.loss_history.push_back(loss);
        if (std::sqrt(gsq) < opt.lr_gradient_tolerance) {
            fit.converged = true;
            break;
        }
        step = std::min(step * 2.0, 1e6);
        LogisticParams trial;
        double trial_loss = loss;
        bool accepted = false;
        while (step > 1e-20) {
            trial.weights.resize(x.cols);
            for (std::size_t c = 0; c < x.cols; ++c) trial.weights[c] = fit.params.weights[c] - step * grad.weights[c];
            trial.bias = fit.params.bias - step * grad.bias;
            trial_loss = logistic_loss(trial, x, labels, opt.l2, nullptr);
            if (trial_loss <= loss - kArmijo * step * gsq) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No decrease representable in floating point: treat as stationary.
            fit.converged = true;
            break;
        }
        fit.params = std::move(trial);
        loss = logistic_loss(fit.params, x, labels, opt.l2, &grad);
    }
    if (fit.loss_history.empty() || fit.loss_history.back() != loss) fit.loss_history.push_back(loss);
    return fit;
}

// ---- Gaussian naive Bayes ---------------------------------------------------------------

std::array<double, 2> GaussianNbParams::joint_log_likelihood(std::span<const double> x) const {
    std::array<double, 2> out{};
    for (int c = 0; c < 2; ++c) {
        double ll = std::log(priors[c]);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double var = variances[c][i];
            const double d = x[i] - means[c][i];
            ll += -0.5 * std::log(2.0 * std::numbers::pi * var) - d * d / (2.0 * var);
        }
        out[c] = ll;
    }
    return out;
}

GaussianNbParams fit_gaussian_nb(const Matrix& x, std::span<const int> labels, double var_smoothing) {
    GaussianNbParams p;
    std::array<std::size_t, 2> counts{0, 0};
    for (int c = 0; c < 2; ++c) {
        p.means[c].assign(x.cols, 0.0);
        p.variances[c].assign(x.cols, 0.0);
    }
    for (std::size_t r = 0; r < x.rows; ++r) {
        const int c = labels[r];
        ++counts[c];
        for (std::size_t f = 0; f < x.cols; ++f) p.means[c][f] += x(r, f);
    }
    for (int c = 0; c < 2; ++c) {
        for (auto& m : p.means[c]) m /= static_cast<double>(counts[c]);
    }
    for (std::size_t r = 0; r < x.rows; ++r) {
        const int c = labels[r];
        for (std::size_t f = 0; f < x.cols; ++f) {
            const double d = x(r, f) - p.means[c][f];
            p.variances[c][f] += d * d;
        }
    }
    for (int c = 0; c < 2; ++c) {
        for (auto& v : p.variances[c]) v /= static_cast<double>(counts[c]);
    }

    // Smoothing is relative to the largest pooled (all-class) feature variance.
    double max_pooled = 0.0;
    for (std::size_t f = 0; f < x.cols; ++f) {
        double mean = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) mean += x(r, f);
        mean /= static_cast<double>(x.rows);
        double ss = 0.0;
        for (std::size_t r = 0; r < x.rows; ++r) ss += (x(r, f) - mean) * (x(r, f) - mean);
        max_pooled = std::max(max_pooled, ss / static_cast<double>(x.rows));
    }
    const double eps = var_smoothing * max_pooled;
    for (int c = 0; c < 2; ++c) {
        for (auto& v : p.variances[c]) v += eps;
        p.priors[c] = static_cast<double>(counts[c]) / static_cast<double>(x.rows);
    }
    return p;
}

// ---- MLP --------------------------------------------------------------------------------

double MlpParams::logit(std::span<const double> x) const {
    std::vector<double> a(x.begin(), x.end()), next;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        next.assign(layer.outputs, 0.0);
        for (std::size_t o = 0; o < layer.outputs; ++o) {
            double z = layer.bias[o];
            const double* w = layer.weights.data() + o * layer.inputs;
            for (std::size_t i = 0; i < layer.inputs; ++i) z += w[i] * a[i];
            next[o] = (l + 1 < layers.size()) ? std::max(z, 0.0) : z;
        }
        a.swap(next);
    }
    return a.at(0);
}

std::size_t MlpParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weights.size() + l.bias.size();
    return n;
}

std::vector<double> MlpParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (const auto& l : layers) {
        flat.insert(flat.end(), l.weights.begin(), l.weights.end());
        flat.insert(flat.end(), l.bias.begin(), l.bias.end());
    }
    return flat;
}

void MlpParams::unflatten(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw Error(ErrorCode::ShapeMismatch, "flat parameter size mismatch");
    std::size_t k = 0;
    for (auto& l : layers) {
        for (auto& w : l.weights) w = flat[k++];
        for (auto& b : l.bias) b = flat[k++];
    }
}

MlpParams init_mlp(std::span<const std::size_t> sizes, std::uint64_t seed) {
    if (sizes.size() < 2) throw Error(ErrorCode::ConfigInvalid, "MLP needs at least input and output sizes");
    Rng rng(seed);
    MlpParams p;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        DenseLayer layer;
        layer.inputs = sizes[l];
        layer.outputs = sizes[l + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs));
        layer.weights.resize(layer.inputs * layer.outputs);
        for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
        layer.bias.assign(layer.outputs, 0.0);
        p.layers.push_back(std::move(layer));
    }
    return p;
}

double mlp_loss(const MlpParams& params, const Matrix& x, std::span<const int> labels, MlpParams* grad) {
    const auto& layers = params.layers;
    const std::size_t depth = layers.size();
    if (grad) {
        *grad = params;
        for (auto& l : grad->layers) {
            std::fill(l.weights.begin(), l.weights.end(), 0.0);
            std::fill(l.bias.begin(), l.bias.end(), 0.0);
        }
    }
    // acts[0] = input, acts[l+1] = output of layer l (post-ReLU for hidden layers).
    std::vector<std::vector<double>> acts(depth + 1);
    std::vector<double> delta, prev_delta;
    double loss = 0.0;
    for (std::size_t r = 0; r < x.rows; ++r) {
        const auto row = x.row(r);
        acts[0].assign(row.begin(), row.end());
        for (std::size_t l = 0; l < depth; ++l) {
            const auto& layer = layers[l];
            auto& out = acts[l + 1];
            out.assign(layer.outputs, 0.0);
            for (std::size_t o = 0; o < layer.outputs; ++o) {
                double z = layer.bias[o];
                const double* w = layer.weights.data() + o * layer.inputs;
                for (std::size_t i = 0; i < layer.inputs; ++i) z += w[i] * acts[l][i];
                out[o] = (l + 1 < depth) ? std::max(z, 0.0) : z;
            }
        }
        const double z = acts[depth][0];
        loss += bce_with_logit(z, labels[r]);
        if (!grad) continue;

        delta.assign(1, sigmoid(z) - labels[r]);
        for (std::size_t l = depth; l-- > 0;) {
            const auto& layer = layers[l];
            auto& g = grad->layers[l];
            for (std::size_t o = 0; o < layer.outputs; ++o) {
                double* gw = g.weights.data() + o * layer.inputs;
                for (std::size_t i = 0; i < layer.inputs; ++i) gw[i] += delta[o] * acts[l][i];
                g.bias[o] += delta[o];
            }
            if (l == 0) break;
            prev_delta.assign(layer.inputs, 0.0);
            for (std::size_t o = 0; o < layer.outputs; ++o) {
                const double* w = layer.weights.data() + o * layer.inputs;
                for (std::size_t i = 0; i < layer.inputs; ++i) prev_delta[i] += w[i] * delta[o];
            }
            // ReLU derivative: active iff the post-activation is positive.
            for (std::size_t i = 0; i < layer.inputs; ++i) {
                if (acts[l][i] <= 0.0) prev_delta[i] = 0.0;
            }
            delta.swap(prev_delta);
        }
    }
    const double n = static_cast<double>(x.rows);
    if (grad) {
        for (auto& l : grad->layers) {
            for (auto& w : l.weights) w /= n;
            for (auto& b : l.bias) b /= n;
        }
    }
    return loss / n;
}

MlpFit fit_mlp(const Matrix& x, std::span<const int> labels, const TrainOptions& opt, std::uint64_t seed) {
    std::vector<std::size_t> sizes(kMlpShape.begin(), kMlpShape.end());
    sizes.front() = x.cols;
    MlpFit fit;
    fit.params = init_mlp(sizes, seed);
    // Shuffling uses a stream decorrelated from initialisation.
    Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);

    std::vector<double> theta = fit.params.flatten();
    std::vector<double> m(theta.size(), 0.0), v(theta.size(), 0.0);
    std::vector<std::size_t> order(x.rows);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::max<std::size_t>(1, opt.mlp_batch_size);
    fit.initial_loss = mlp_loss(fit.params, x, labels, nullptr);

    long step = 0;
    MlpParams grad;
    for (int epoch = 0; epoch < opt.mlp_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            Matrix xb(end - start, x.cols);
            std::vector<int> yb(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const auto src = x.row(order[k]);
                std::copy(src.begin(), src.end(), xb.row(k - start).begin());
                yb[k - start] = labels[order[k]];
            }
            mlp_loss(fit.params, xb, yb, &grad);
            const std::vector<double> g = grad.flatten();
            ++step;
            const double bc1 = 1.0 - std::pow(opt.adam_beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(opt.adam_beta2, static_cast<double>(step));
            for (std::size_t k = 0; k < theta.size(); ++k) {
                m[k] = opt.adam_beta1 * m[k] + (1.0 - opt.adam_beta1) * g[k];
                v[k] = opt.adam_beta2 * v[k] + (1.0 - opt.adam_beta2) * g[k] * g[k];
                theta[k] -= opt.mlp_learning_rate * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + opt.adam_epsilon);
            }
            fit.params.unflatten(theta);
        }
        fit.epoch_loss.push_back(mlp_loss(fit.params, x, labels, nullptr));
    }
    return fit;
}

// ---- Model ------------------------------------------------------------------------------

nlohmann::json TrainOptions::to_json(ClassifierKind kind) const {
    switch (kind) {
    case ClassifierKind::logistic_regression:
        return {{"l2", l2}, {"max_iterations", lr_max_iterations}, {"gradient_tolerance", lr_gradient_tolerance},
                {"optimizer", "gradient_descent_backtracking"}};
    case ClassifierKind::gaussian_nb: return {{"var_smoothing", gnb_var_smoothing}};
    case ClassifierKind::mlp:
        return {{"hidden", {kMlpShape[1], kMlpShape[2]}}, {"activation", "relu"}, {"output", "sigmoid"},
                {"loss", "binary_cross_entropy"}, {"optimizer", "adam"}, {"learning_rate", mlp_learning_rate},
                {"beta1", adam_beta1}, {"beta2", adam_beta2}, {"epsilon", adam_epsilon},
                {"batch_size", mlp_batch_size}, {"epochs", mlp_epochs}, {"init", "he_uniform"}};
    }
    return {};
}

double ClassifierModel::score_standardized(std::span<const double> z) const {
    return std::visit(
        [&](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GaussianNbParams>) {
                const auto ll = p.joint_log_likelihood(z);
                return sigmoid(ll[1] - ll[0]);
            } else {
                return sigmoid(p.logit(z));
            }
        },
        params);
}

double ClassifierModel::score(std::span<const double> raw) const {
    const auto z = standardizer.apply(raw);
    return score_standardized(z);
}

ClassifierModel train(ClassifierKind kind, const Matrix& x, std::span<const int> labels, const TrainOptions& opt,
                      std::uint64_t seed, const std::string& layout) {
    check_training_data(x, labels);
    ClassifierModel model;
    model.kind = kind;
    model.feature_layout = layout;
    model.train_seed = seed;
    model.standardizer = Standardizer::fit(x);
    const Matrix z = model.standardizer.apply(x);

    nlohmann::json meta;
    meta["warnings"] = nlohmann::json::array();
    switch (kind) {
    case ClassifierKind::logistic_regression: {
        auto fit = fit_logistic(z, labels, opt);
        meta["iterations"] = fit.iterations;
        meta["converged"] = fit.converged;
        meta["final_loss"] = fit.loss_history.back();
        if (!fit.converged) {
            meta["warnings"].push_back("NonConvergence: gradient norm above tolerance after max iterations");
        }
        model.params = std::move(fit.params);
        break;
    }
    case ClassifierKind::gaussian_nb: model.params = fit_gaussian_nb(z, labels, opt.gnb_var_smoothing); break;
    case ClassifierKind::mlp: {
        auto fit = fit_mlp(z, labels, opt, seed);
        const double final_loss = fit.epoch_loss.empty() ? fit.initial_loss : fit.epoch_loss.back();
        meta["epochs"] = fit.epoch_loss.size();
        meta["initial_loss"] = fit.initial_loss;
        meta["final_loss"] = final_loss;
        if (!(final_loss < fit.initial_loss)) {
            meta["warnings"].push_back("NonConvergence: training loss did not decrease");
        }
        model.params = std::move(fit.params);
        break;
    }
    }

    std::vector<double> scores(z.rows);
    for (std::size_t r = 0; r < z.rows; ++r) scores[r] = model.score_standardized(z.row(r));
    model.tau_star = select_threshold(scores, labels);
    std::size_t pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    meta["n_train"] = x.rows;
    meta["n_generated"] = pos;
    meta["n_natural"] = x.rows - pos;
    meta["train_f1"] = f1_at(scores, labels, model.tau_star);
    meta["hyperparameters"] = opt.to_json(kind);
    model.train_metadata = std::move(meta);
    return model;
}

Prediction predict(const ClassifierModel& model, const FeatureVector& y, std::string_view layout) {
    if (!layout.empty() && layout != model.feature_layout) {
        throw Error(ErrorCode::LayoutMismatch, "feature layout '" + std::string(layout) + "' != model layout '" +
                                                   model.feature_layout + "'");
    }
    if (y.values.size() != model.standardizer.mean.size()) {
        throw Error(ErrorCode::LayoutMismatch, "feature vector has " + std::to_string(y.values.size()) +
                                                   " values, model expects " +
                                                   std::to_string(model.standardizer.mean.size()));
    }
    const auto start = std::chrono::steady_clock::now();
    Prediction p;
    p.score = model.score(y.values);
    p.label = p.score >= model.tau_star ? VideoLabel::generated : VideoLabel::natural;
    p.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return p;
}

double f1_at(std::span<const double> scores, std::span<const int> labels, double tau) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool predicted = scores[i] >= tau;
        if (predicted && labels[i] == 1) ++tp;
        else if (predicted) ++fp;
        else if (labels[i] == 1) ++fn;
    }
    const std::size_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double select_threshold(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "scores and labels differ in length");
    std::size_t total_pos = 0;
    for (int y : labels) total_pos += (y == 1);
    if (total_pos == 0 || total_pos == labels.size()) {
        throw Error(ErrorCode::DegenerateData, "threshold selection needs both classes");
    }
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    // Walk tie groups from the highest score down. After absorbing a group whose value is u,
    // "positive iff score >= u" equals thresholding at the midpoint below u (or at u itself
    // for the lowest group).
    double best_tau = std::nextafter(scores[idx.front()], std::numeric_limits<double>::infinity());
    double best_f1 = 0.0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = 0; k < idx.size();) {
        const double u = scores[idx[k]];
        while (k < idx.size() && scores[idx[k]] == u) {
            (labels[idx[k]] == 1 ? tp : fp) += 1;
            ++k;
        }
        double tau = u;
        if (k < idx.size()) {
            const double below = scores[idx[k]];
            tau = below + (u - below) / 2.0;
            if (!(tau > below)) tau = u;
        }
        const std::size_t fn = total_pos - tp;
        const double f1 = 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
        if (f1 > best_f1) {
            best_f1 = f1;
            best_tau = tau;
        }
    }
    return clamp_open_unit(best_tau);
}

nlohmann::json to_json(const ClassifierModel& model) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["kind"] = to_string(model.kind);
    j["feature_layout"] = model.feature_layout;
    j["standardizer"] = {{"mean", model.standardizer.mean}, {"std", model.standardizer.std}};
    j["tau_star"] = model.tau_star;
    j["train_seed"] = model.train_seed;
    j["train_metadata"] = model.train_metadata;
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, LogisticParams>) {
                j["params"] = {{"weights", p.weights}, {"bias", p.bias}};
            } else if constexpr (std::is_same_v<T, GaussianNbParams>) {
                j["params"] = {{"priors", p.priors}, {"means", p.means}, {"variances", p.variances}};
            } else {
                nlohmann::json layers = nlohmann::json::array();
                for (const auto& l : p.layers) {
                    layers.push_back({{"inputs", l.inputs}, {"outputs", l.outputs}, {"weights", l.weights},
                                      {"bias", l.bias}});
                }
                j["params"] = {{"layers", layers}};
            }
        },
        model.params);
    return j;
}

ClassifierModel model_from_json(const nlohmann::json& j) {
    ClassifierModel m;
    try {
        if (j.at("format_version").get<int>() != kModelFormatVersion) {
            throw Error(ErrorCode::FormatError, "unsupported model format_version");
        }
        m.kind = classifier_kind_from_string(j.at("kind").get<std::string>());
        m.feature_layout = j.at("feature_layout").get<std::string>();
        m.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
        m.standardizer.std = j.at("standardizer").at("std").get<std::vector<double>>();
        m.tau_star = j.at("tau_star").get<double>();
        m.train_seed = j.at("train_seed").get<std::uint64_t>();
        m.train_metadata = j.value("train_metadata", nlohmann::json::object());
        const auto& p = j.at("params");
        const std::size_t width = m.standardizer.mean.size();
        switch (m.kind) {
        case ClassifierKind::logistic_regression: {
            LogisticParams lr{p.at("weights").get<std::vector<double>>(), p.at("bias").get<double>()};
            if (lr.weights.size() != width) throw Error(ErrorCode::FormatError, "LR weight width mismatch");
            m.params = std::move(lr);
            break;
        }
        case ClassifierKind::gaussian_nb: {
            GaussianNbParams nb;
            nb.priors = p.at("priors").get<std::array<double, 2>>();
            nb.means = p.at("means").get<std::array<std::vector<double>, 2>>();
            nb.variances = p.at("variances").get<std::array<std::vector<double>, 2>>();
            for (int c = 0; c < 2; ++c) {
                if (nb.means[c].size() != width || nb.variances[c].size() != width) {
                    throw Error(ErrorCode::FormatError, "GNB parameter width mismatch");
                }
            }
            m.params = std::move(nb);
            break;
        }
        case ClassifierKind::mlp: {
            MlpParams mlp;
            for (const auto& l : p.at("layers")) {
                DenseLayer layer;
                layer.inputs = l.at("inputs").get<std::size_t>();
                layer.outputs = l.at("outputs").get<std::size_t>();
                layer.weights = l.at("weights").get<std::vector<double>>();
                layer.bias = l.at("bias").get<std::vector<double>>();
                if (layer.weights.size() != layer.inputs * layer.outputs || layer.bias.size() != layer.outputs) {
                    throw Error(ErrorCode::FormatError, "MLP layer shape mismatch");
                }
                mlp.layers.push_back(std::move(layer));
            }
            if (mlp.layers.size() != kMlpShape.size() - 1 || mlp.layers.front().inputs != width) {
                throw Error(ErrorCode::FormatError, "MLP must be input->64->32->1");
            }
            for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
                if (mlp.layers[l].outputs != kMlpShape[l + 1] ||
                    (l > 0 && mlp.layers[l].inputs != mlp.layers[l - 1].outputs)) {
                    throw Error(ErrorCode::FormatError, "MLP must be input->64->32->1");
                }
            }
            m.params = std::move(mlp);
            break;
        }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::FormatError, std::string("invalid model file: ") + e.what());
    }
    if (!(m.tau_star > 0.0 && m.tau_star < 1.0)) throw Error(ErrorCode::FormatError, "tau_star must lie in (0, 1)");
    if (m.standardizer.std.size() != m.standardizer.mean.size()) {
        throw Error(ErrorCode::FormatError, "standardizer mean/std width mismatch");
    }
    return m;
}

void save_model(const std::filesystem::path& path, const ClassifierModel& model) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << to_json(model).dump(2) << '\n';
}

ClassifierModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open model " + path.string());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::FormatError, "model file is not valid JSON: " + path.string());
    return model_from_json(j);
}

}  // namespace restrav
