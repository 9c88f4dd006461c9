#include "vprom/monitoring.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <set>

namespace vprom::monitoring {

void SensorLayout::validate(Index n_dof) const {
    if (dofs.empty()) throw ConfigError("sensor layout is empty");
    if (!names.empty() && names.size() != dofs.size()) throw ConfigError("one name per sensor");
    std::set<Index> seen;
    for (Index d : dofs) {
        if (d < 0 || d >= n_dof) throw ConfigError("sensor dof " + std::to_string(d) + " out of range");
        if (!seen.insert(d).second) throw ConfigError("sensor dofs must be distinct");
    }
}

SensorLayout SensorLayout::evenly_spaced(Index n_dof, Index count) {
    if (count < 1 || count > n_dof) throw ConfigError("sensor count must lie in [1, n_dof]");
    SensorLayout s;
    for (Index i = 0; i < count; ++i) {
        // Centres of count equal segments.
        const Index d = static_cast<Index>(std::floor((static_cast<double>(i) + 0.5) * static_cast<double>(n_dof) /
                                                      static_cast<double>(count)));
        s.dofs.push_back(d);
        s.names.push_back("dof" + std::to_string(d));
    }
    return s;
}

Index SensorLayout::nearest_neighbor(Index channel) const {
    if (size() < 2) return channel;
    const Index here = dofs[static_cast<std::size_t>(channel)];
    Index best = -1;
    Index best_dist = 0;
    for (Index c = 0; c < size(); ++c) {
        if (c == channel) continue;
        const Index d = dofs[static_cast<std::size_t>(c)];
        const Index dist = std::abs(d - here);
        if (best < 0 || dist < best_dist || (dist == best_dist && d < dofs[static_cast<std::size_t>(best)])) {
            best = c;
            best_dist = dist;
        }
    }
    return best;
}

Matrix sample_sensors(const Matrix& history, const SensorLayout& layout) {
    layout.validate(history.rows());
    Matrix out(layout.size(), history.cols());
    for (Index i = 0; i < layout.size(); ++i) out.row(i) = history.row(layout.dofs[static_cast<std::size_t>(i)]);
    return out;
}

Matrix add_measurement_noise(const Matrix& signal, double ratio, std::uint64_t seed) {
    if (!(ratio >= 0.0)) throw ConfigError("noise ratio must be non-negative");
    Matrix out = signal;
    if (ratio == 0.0 || signal.cols() == 0) return out;
    for (Index c = 0; c < signal.rows(); ++c) {
        const double rms = std::sqrt(signal.row(c).squaredNorm() / static_cast<double>(signal.cols()));
        if (rms == 0.0) continue;
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(c)};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> nd(0.0, ratio * rms);
        for (Index t = 0; t < signal.cols(); ++t) out(c, t) += nd(rng);
    }
    return out;
}

ARXModel fit_arx(const Vector& output, const Vector& input, Index n_a, Index n_b, Index delay, double lambda,
                 const ARXOptions& options) {
    if (n_a < 1 || n_b < 1) throw ConfigError("ARX orders must be >= 1");
    if (delay < 0) throw ConfigError("ARX delay must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("ARX regularization must be >= 0");
    require_dims(output.size() == input.size(), "ARX output and input lengths differ");
    const Index n = output.size();
    const Index start = std::max(n_a, delay + n_b - 1);
    if (n <= n_a + n_b + delay || n - start < 1) throw ConfigError("signal too short for the ARX orders");

    const Index rows = n - start;
    const Index p = n_a + n_b;
    Matrix phi(rows, p);
    for (Index t = start; t < n; ++t) {
        const Index r = t - start;
        for (Index i = 1; i <= n_a; ++i) phi(r, i - 1) = output(t - i);
        for (Index j = 0; j < n_b; ++j) phi(r, n_a + j) = input(t - delay - j);
    }
    const Vector y = output.tail(rows);

    ARXModel model;
    model.n_a = n_a;
    model.n_b = n_b;
    model.delay = delay;
    Matrix design = phi;
    if (options.hidden_units > 0) {
        std::mt19937_64 rng(options.seed);
        const double limit = std::sqrt(6.0 / static_cast<double>(p + options.hidden_units));
        std::uniform_real_distribution<double> ud(-limit, limit);
        model.hidden_weights.resize(options.hidden_units, p);
        for (Index j = 0; j < p; ++j)
            for (Index i = 0; i < options.hidden_units; ++i) model.hidden_weights(i, j) = ud(rng);
        model.hidden_bias = Vector::Zero(options.hidden_units);
        design.conservativeResize(rows, p + options.hidden_units);
        design.rightCols(options.hidden_units) =
            (phi * model.hidden_weights.transpose()).array().tanh().matrix();
    }

    const Index cols = design.cols();
    if (lambda > 0.0) {
        // Ridge as an augmented least-squares problem keeps the conditioning of QR.
        Matrix aug(rows + cols, cols);
        aug.topRows(rows) = design;
        aug.bottomRows(cols) = std::sqrt(lambda) * Matrix::Identity(cols, cols);
        Vector rhs = Vector::Zero(rows + cols);
        rhs.head(rows) = y;
        model.coefficients = aug.colPivHouseholderQr().solve(rhs);
    } else {
        // Minimum-norm solution, so unexcited regressors get zero weight.
        model.coefficients = design.completeOrthogonalDecomposition().solve(y);
    }
    model.residual = std::sqrt((design * model.coefficients - y).squaredNorm() / static_cast<double>(rows));
    return model;
}

Vector statistical_features(const Vector& signal, double dt) {
    if (!(dt > 0.0)) throw ConfigError("sampling step must be positive");
    const Index n = signal.size();
    if (n < 2) throw ConfigError("statistical features need at least two samples");
    const double nd = static_cast<double>(n);
    const double mean = signal.mean();
    const Vector c = signal.array() - mean;
    const double m2 = c.squaredNorm() / nd;
    const double m4 = c.array().pow(4).sum() / nd;
    const double rms = std::sqrt(signal.squaredNorm() / nd);
    const double peak = signal.cwiseAbs().maxCoeff();
    const double kurtosis = m2 > 0.0 ? m4 / (m2 * m2) : 0.0;

    Index crossings = 0;
    for (Index t = 1; t < n; ++t)
        if ((signal(t - 1) < 0.0) != (signal(t) < 0.0)) ++crossings;
    const double zcr = static_cast<double>(crossings) / ((nd - 1.0) * dt);

    Eigen::FFT<double> fft;
    std::vector<double> x(signal.data(), signal.data() + n);
    std::vector<std::complex<double>> spectrum;
    fft.fwd(spectrum, x);
    double best_mag = -1.0, dominant = 0.0, weighted = 0.0, total = 0.0;
    for (Index k = 1; k <= n / 2; ++k) {
        const double mag = std::abs(spectrum[static_cast<std::size_t>(k)]);
        const double f = static_cast<double>(k) / (nd * dt);
        if (mag > best_mag) {
            best_mag = mag;
            dominant = f;
        }
        weighted += f * mag;
        total += mag;
    }
    const double centroid = total > 0.0 ? weighted / total : 0.0;
    if (total == 0.0) dominant = 0.0;

    Vector out(kStatisticalFeatureCount);
    out << mean, std::sqrt(m2), rms, peak, kurtosis, zcr, dominant, centroid;
    return out;
}

MinMaxScaler MinMaxScaler::fit(const Matrix& data) {
    if (data.rows() < 1 || data.cols() < 1) throw ConfigError("scaler needs a non-empty dataset");
    MinMaxScaler s;
    s.lower = data.colwise().minCoeff().transpose();
    const Vector upper = data.colwise().maxCoeff().transpose();
    s.range = upper - s.lower;
    for (Index j = 0; j < s.range.size(); ++j)
        if (!(s.range(j) > 0.0)) s.range(j) = 1.0;  // constant feature maps to 0
    return s;
}

Matrix MinMaxScaler::transform(const Matrix& data) const {
    if (!fitted()) throw Error("scaler is not fitted");
    require_dims(data.cols() == lower.size(), "scaler feature count mismatch");
    return ((data.rowwise() - lower.transpose()).array().rowwise() / range.transpose().array()).matrix();
}

Matrix MinMaxScaler::inverse(const Matrix& scaled) const {
    if (!fitted()) throw Error("scaler is not fitted");
    require_dims(scaled.cols() == lower.size(), "scaler feature count mismatch");
    return ((scaled.array().rowwise() * range.transpose().array()).matrix().rowwise() + lower.transpose());
}

Vector MinMaxScaler::transform(const Vector& row) const { return transform(Matrix(row.transpose())).row(0).transpose(); }
Vector MinMaxScaler::inverse(const Vector& row) const { return inverse(Matrix(row.transpose())).row(0).transpose(); }

PCAProjector pca_fit(const Matrix& data, Index out_dim) {
    if (out_dim < 1 || out_dim > std::min(data.rows(), data.cols()))
        throw ConfigError("PCA output dimension must lie in [1, min(samples, features)]");
    PCAProjector p;
    p.mean = data.colwise().mean().transpose();
    const Matrix centred = data.rowwise() - p.mean.transpose();
    Eigen::BDCSVD<Matrix> svd(centred, Eigen::ComputeThinV);
    p.components = svd.matrixV().leftCols(out_dim);
    const double dof = std::max<double>(1.0, static_cast<double>(data.rows() - 1));
    p.variances = svd.singularValues().head(out_dim).array().square() / dof;
    // Sign convention: largest-magnitude loading positive, for reproducible output.
    for (Index k = 0; k < out_dim; ++k) {
        Index arg = 0;
        p.components.col(k).cwiseAbs().maxCoeff(&arg);
        if (p.components(arg, k) < 0.0) p.components.col(k) *= -1.0;
    }
    return p;
}

Matrix PCAProjector::transform(const Matrix& data) const {
    if (!fitted()) throw Error("PCA projector is not fitted");
    require_dims(data.cols() == mean.size(), "PCA feature count mismatch");
    return (data.rowwise() - mean.transpose()) * components;
}

Matrix PCAProjector::inverse(const Matrix& projected) const {
    if (!fitted()) throw Error("PCA projector is not fitted");
    require_dims(projected.cols() == components.cols(), "PCA component count mismatch");
    return (projected * components.transpose()).rowwise() + mean.transpose();
}

Vector raw_features(const Matrix& signals, double dt, const SensorLayout& layout, const FeatureConfig& config) {
    require_dims(signals.rows() == layout.size(), "one signal row per sensor");
    Index steps = signals.cols();
    if (config.window > 0.0) steps = std::min<Index>(steps, static_cast<Index>(std::llround(config.window / dt)) + 1);
    const Matrix s = signals.leftCols(steps);

    std::vector<Vector> blocks;
    if (config.mode == FeatureConfig::Mode::Statistical) {
        for (Index c = 0; c < s.rows(); ++c) blocks.push_back(statistical_features(s.row(c).transpose(), dt));
    } else {
        ARXOptions opt;
        opt.hidden_units = config.hidden_units;
        for (Index c = 0; c < s.rows(); ++c) {
            opt.seed = static_cast<std::uint64_t>(c) + 1;
            const Index nb = layout.nearest_neighbor(c);
            const auto m = fit_arx(s.row(c).transpose(), s.row(nb).transpose(), config.n_a, config.n_b, config.delay,
                                   config.lambda, opt);
            blocks.push_back(m.coefficients);
        }
    }
    Index total = 0;
    for (const auto& b : blocks) total += b.size();
    Vector out(total);
    Index at = 0;
    for (const auto& b : blocks) {
        out.segment(at, b.size()) = b;
        at += b.size();
    }
    return out;
}

void FeatureExtractor::fit(const Matrix& raw) {
    scaler_ = MinMaxScaler::fit(raw);
    pca_ = pca_fit(scaler_.transform(raw), config_.pca_dim);
}

Matrix FeatureExtractor::transform_dataset(const Matrix& raw) const {
    if (!fitted()) throw Error("feature extractor is not fitted");
    return pca_.transform(scaler_.transform(raw));
}

MonitoringFeatures FeatureExtractor::transform_raw(const Vector& raw) const {
    MonitoringFeatures f;
    f.w = transform_dataset(Matrix(raw.transpose())).row(0).transpose();
    f.raw_dim = raw.size();
    f.scaler_id = hash_matrix(scaler_.lower) ^ (hash_matrix(scaler_.range) << 1);
    f.pca_id = hash_matrix(pca_.components);
    return f;
}

MonitoringFeatures FeatureExtractor::extract(const Matrix& signals, double dt) const {
    return transform_raw(raw_features(signals, dt, layout_, config_));
}

}  // namespace vprom::monitoring
