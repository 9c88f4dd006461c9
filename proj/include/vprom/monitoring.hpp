#pragma once

// Monitoring features: sensor selection, measurement noise, ARX fits,
// statistical descriptors, [0,1] scaling and PCA compression into w.
//
// Signal matrices are channels x steps. Dataset matrices are samples x features.

#include "vprom/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vprom::monitoring {

struct SensorLayout {
    std::vector<Index> dofs;
    std::vector<std::string> names;

    Index size() const { return static_cast<Index>(dofs.size()); }
    void validate(Index n_dof) const;
    static SensorLayout evenly_spaced(Index n_dof, Index count);
    /// Nearest other sensor by dof distance; ties resolve to the lower dof.
    Index nearest_neighbor(Index channel) const;
};

/// Rows of `history` (n_dof x steps) picked out at the sensor dofs.
Matrix sample_sensors(const Matrix& history, const SensorLayout& layout);

/// Zero-mean Gaussian noise with std = ratio * RMS of each channel. Every
/// channel draws from its own stream, so channels are independent.
Matrix add_measurement_noise(const Matrix& signal, double ratio, std::uint64_t seed);

struct ARXOptions {
    Index hidden_units = 0;  // > 0: tanh random-feature layer on the lagged regressors
    std::uint64_t seed = 0;  // hidden weights
};

// y[t] = sum_{i=1..n_a} a_i y[t-i] + sum_{j=0..n_b-1} b_j x[t-d-j]  (+ sum_h c_h tanh(W phi + beta)_h)
struct ARXModel {
    Index n_a = 0;
    Index n_b = 0;
    Index delay = 0;
    Vector coefficients;   // [a_1..a_na, b_0..b_{nb-1}, c_1..c_H]
    Matrix hidden_weights; // H x (n_a + n_b), empty for linear ARX
    Vector hidden_bias;
    double residual = 0.0; // RMS one-step-ahead residual

    Vector ar() const { return coefficients.head(n_a); }
    Vector exogenous() const { return coefficients.segment(n_a, n_b); }
    Index hidden_units() const { return hidden_weights.rows(); }
};

ARXModel fit_arx(const Vector& output, const Vector& input, Index n_a, Index n_b, Index delay, double lambda,
                 const ARXOptions& options = {});

/// mean, std, RMS, peak, kurtosis, zero-crossing rate, dominant frequency and
/// spectral centroid of one channel (frequencies in Hz).
Vector statistical_features(const Vector& signal, double dt);
inline constexpr Index kStatisticalFeatureCount = 8;

struct MinMaxScaler {
    Vector lower;
    Vector range;  // max - min, or 1 where the feature is constant

    bool fitted() const { return lower.size() > 0; }
    static MinMaxScaler fit(const Matrix& data);
    Matrix transform(const Matrix& data) const;
    Matrix inverse(const Matrix& scaled) const;
    Vector transform(const Vector& row) const;
    Vector inverse(const Vector& row) const;
};

struct PCAProjector {
    Vector mean;
    Matrix components;  // d x k, orthonormal columns
    Vector variances;   // k, non-increasing

    bool fitted() const { return components.size() > 0; }
    Index output_dim() const { return components.cols(); }
    Matrix transform(const Matrix& data) const;
    Matrix inverse(const Matrix& projected) const;
};

PCAProjector pca_fit(const Matrix& data, Index out_dim);

struct FeatureConfig {
    enum class Mode { Statistical, ARX };
    Mode mode = Mode::Statistical;
    Index n_a = 64;
    Index n_b = 64;
    Index delay = 0;
    double lambda = 1e-6;
    Index hidden_units = 0;
    double window = 0.0;  // seconds from the start; 0 uses the full record
    Index pca_dim = 8;
};

struct MonitoringFeatures {
    Vector w;
    Index raw_dim = 0;
    std::uint64_t scaler_id = 0;
    std::uint64_t pca_id = 0;
};

/// Raw (unscaled) feature vector for one set of sensor signals.
Vector raw_features(const Matrix& signals, double dt, const SensorLayout& layout, const FeatureConfig& config);

class FeatureExtractor {
public:
    FeatureExtractor() = default;
    FeatureExtractor(FeatureConfig config, SensorLayout layout) : config_(config), layout_(std::move(layout)) {}

    /// Fits scaler and PCA on raw features (samples x raw_dim).
    void fit(const Matrix& raw);
    MonitoringFeatures transform_raw(const Vector& raw) const;
    Matrix transform_dataset(const Matrix& raw) const;
    MonitoringFeatures extract(const Matrix& signals, double dt) const;

    bool fitted() const { return scaler_.fitted() && pca_.fitted(); }
    const FeatureConfig& config() const { return config_; }
    const SensorLayout& layout() const { return layout_; }
    const MinMaxScaler& scaler() const { return scaler_; }
    const PCAProjector& pca() const { return pca_; }
    void set_state(MinMaxScaler scaler, PCAProjector pca) {
        scaler_ = std::move(scaler);
        pca_ = std::move(pca);
    }
    Index output_dim() const { return pca_.output_dim(); }

private:
    FeatureConfig config_;
    SensorLayout layout_;
    MinMaxScaler scaler_;
    PCAProjector pca_;
};

}  // namespace vprom::monitoring
