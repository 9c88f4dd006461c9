#pragma once

// Parameter recovery p | w ~ N(mu(w), diag sigma(w)^2).
//   shared: w -> 256 ReLU
//   mean:   256 -> 64 ReLU -> 16 ReLU -> k linear
//   std:    256 -> 64 ReLU -> 16 ReLU -> k softplus
// Trained on the positive Gaussian negative log-likelihood in [0,1]-scaled
// parameter coordinates.

#include "vprom/common.hpp"
#include "vprom/neural.hpp"

#include <cstdint>
#include <vector>

namespace vprom::inference {

/// 1/2 (sum ln sigma^2 + sum (p - mu)^2 / sigma^2 + k ln 2 pi).
double nll_loss(const Vector& p, const Vector& mu, const Vector& sigma);

struct InferenceSchedule {
    Index epochs = 1000;       // upper bound; cross-validation picks the count
    Index batch_size = 32;
    double learning_rate = 1e-3;
    Index folds = 5;           // < 2 disables cross-validation
    Index eval_every = 10;     // validation cadence inside each fold
    Index shared_width = 256;
    Index mean_hidden1 = 64;
    Index mean_hidden2 = 16;
    std::uint64_t seed = 0;
};

struct InferenceReport {
    std::vector<Index> eval_epochs;
    std::vector<double> cv_loss;     // mean validation NLL over folds at each eval epoch
    Index chosen_epochs = 0;
    std::vector<double> train_loss;  // final fit, per epoch
    double seconds = 0.0;
};

class ParamInferenceModel {
public:
    ParamInferenceModel() = default;
    ParamInferenceModel(Index w_dim, Index k, const InferenceSchedule& s);

    Index input_dim() const { return shared_.input_dim(); }
    Index output_dim() const { return mean_.output_dim(); }
    bool trained() const { return lower_.size() > 0; }

    /// Scaled-space (mu, sigma), samples as columns.
    void predict_scaled(const Matrix& w, Matrix& mu, Matrix& sigma) const;
    /// Physical-space (mu, sigma) for one feature vector.
    void predict(const Vector& w, Vector& mu, Vector& sigma) const;

    /// Mean NLL over the batch (scaled space) and its parameter gradient.
    double loss(const Matrix& w, const Matrix& p_scaled, Vector* gradient) const;

    Vector parameters() const;
    void set_parameters(const Vector& theta);

    /// Parameter scaling: p_scaled = (p - lower) / range. Draws are clamped to
    /// [clamp_lower, clamp_upper].
    void set_scaling(const Vector& lower, const Vector& range, const Vector& clamp_lower, const Vector& clamp_upper);
    const Vector& lower() const { return lower_; }
    const Vector& range() const { return range_; }
    const Vector& clamp_lower() const { return clamp_lower_; }
    const Vector& clamp_upper() const { return clamp_upper_; }

    const neural::DenseNetwork& shared() const { return shared_; }
    const neural::DenseNetwork& mean_head() const { return mean_; }
    const neural::DenseNetwork& std_head() const { return std_; }
    void set_networks(neural::DenseNetwork shared, neural::DenseNetwork mean, neural::DenseNetwork std);

    static constexpr double kSigmaFloor = 1e-6;  // added to the softplus output

private:
    neural::DenseNetwork shared_;
    neural::DenseNetwork mean_;
    neural::DenseNetwork std_;
    Vector lower_, range_, clamp_lower_, clamp_upper_;
};

/// w: samples x w_dim, p: samples x k (physical units). Bounds are the
/// truncation bounds used for clamping; the scaling comes from the data range.
ParamInferenceModel train_inference(const Matrix& w, const Matrix& p, const Vector& lower, const Vector& upper,
                                    const InferenceSchedule& schedule, InferenceReport* report = nullptr);

struct InferenceResult {
    Vector mu;
    Vector sigma;
    Matrix samples;  // k x n_draws
};

InferenceResult infer_parameters(const ParamInferenceModel& model, const Vector& w, Index n_draws,
                                 std::uint64_t seed);

}  // namespace vprom::inference
