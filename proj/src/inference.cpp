#include "vprom/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace vprom::inference {

using neural::Activation;
using neural::DenseNetwork;

double nll_loss(const Vector& p, const Vector& mu, const Vector& sigma) {
    require_dims(p.size() == mu.size() && p.size() == sigma.size(), "nll_loss: shapes differ");
    if ((sigma.array() <= 0.0).any()) throw NumericError("nll_loss: sigma must be positive");
    const auto s2 = sigma.array().square();
    return 0.5 * (s2.log().sum() + ((p - mu).array().square() / s2).sum() +
                  static_cast<double>(p.size()) * std::log(2.0 * std::numbers::pi));
}

ParamInferenceModel::ParamInferenceModel(Index w_dim, Index k, const InferenceSchedule& s) {
    if (w_dim < 1 || k < 1) throw ConfigError("inference dimensions must be positive");
    shared_ = DenseNetwork({w_dim, s.shared_width}, {Activation::ReLU}, s.seed);
    mean_ = DenseNetwork({s.shared_width, s.mean_hidden1, s.mean_hidden2, k},
                         {Activation::ReLU, Activation::ReLU, Activation::Linear}, s.seed + 1);
    std_ = DenseNetwork({s.shared_width, s.mean_hidden1, s.mean_hidden2, k},
                        {Activation::ReLU, Activation::ReLU, Activation::Softplus}, s.seed + 2);
}

void ParamInferenceModel::set_networks(DenseNetwork shared, DenseNetwork mean, DenseNetwork std) {
    if (shared.output_dim() != mean.input_dim() || shared.output_dim() != std.input_dim() ||
        mean.output_dim() != std.output_dim())
        throw ConfigError("inference networks do not fit together");
    shared_ = std::move(shared);
    mean_ = std::move(mean);
    std_ = std::move(std);
}

void ParamInferenceModel::set_scaling(const Vector& lower, const Vector& range, const Vector& clamp_lower,
                                      const Vector& clamp_upper) {
    const Index k = output_dim();
    require_dims(lower.size() == k && range.size() == k && clamp_lower.size() == k && clamp_upper.size() == k,
                 "scaling vectors must have one entry per parameter");
    if ((range.array() <= 0.0).any()) throw ConfigError("parameter ranges must be positive");
    lower_ = lower;
    range_ = range;
    clamp_lower_ = clamp_lower;
    clamp_upper_ = clamp_upper;
}

void ParamInferenceModel::predict_scaled(const Matrix& w, Matrix& mu, Matrix& sigma) const {
    const Matrix h = shared_.forward(w);
    mu = mean_.forward(h);
    sigma = std_.forward(h).array() + kSigmaFloor;
}

void ParamInferenceModel::predict(const Vector& w, Vector& mu, Vector& sigma) const {
    if (!trained()) throw Error("inference model is not trained");
    Matrix m, s;
    predict_scaled(w, m, s);
    mu = lower_ + range_.cwiseProduct(m.col(0));
    sigma = range_.cwiseProduct(s.col(0));
}

double ParamInferenceModel::loss(const Matrix& w, const Matrix& p, Vector* gradient) const {
    require_dims(w.cols() == p.cols() && p.rows() == output_dim(), "inference batch shape mismatch");
    const double nb = static_cast<double>(w.cols());
    neural::ForwardCache cs, cm, cv;
    const Matrix h = shared_.forward(w, cs);
    const Matrix mu = mean_.forward(h, cm);
    const Matrix sigma = std_.forward(h, cv).array() + kSigmaFloor;
    double value = 0.0;
    for (Index b = 0; b < w.cols(); ++b) value += nll_loss(p.col(b), mu.col(b), sigma.col(b)) / nb;
    if (!gradient) return value;

    const Matrix r = p - mu;
    const Matrix d_mu = (-r.array() / sigma.array().square() / nb).matrix();
    const Matrix d_sigma = ((1.0 / sigma.array() - r.array().square() / sigma.array().cube()) / nb).matrix();
    Matrix dh_mean, dh_std;
    const Vector gm = mean_.flatten(mean_.backward(cm, d_mu, &dh_mean));
    const Vector gv = std_.flatten(std_.backward(cv, d_sigma, &dh_std));
    const Vector gs = shared_.flatten(shared_.backward(cs, dh_mean + dh_std));
    gradient->resize(gs.size() + gm.size() + gv.size());
    *gradient << gs, gm, gv;
    return value;
}

Vector ParamInferenceModel::parameters() const {
    const Vector a = shared_.parameters(), b = mean_.parameters(), c = std_.parameters();
    Vector out(a.size() + b.size() + c.size());
    out << a, b, c;
    return out;
}

void ParamInferenceModel::set_parameters(const Vector& theta) {
    const Index na = shared_.parameter_count(), nm = mean_.parameter_count(), ns = std_.parameter_count();
    require_dims(theta.size() == na + nm + ns, "inference parameter length mismatch");
    shared_.set_parameters(theta.head(na));
    mean_.set_parameters(theta.segment(na, nm));
    std_.set_parameters(theta.tail(ns));
}

namespace {

// Trains `model` for `epochs` on columns `train`; calls `on_epoch(epoch)` after each.
template <class F>
void fit(ParamInferenceModel& model, const Matrix& w, const Matrix& p, const std::vector<Index>& train,
         const InferenceSchedule& s, Index epochs, std::uint64_t seed, std::vector<double>* losses, F&& on_epoch) {
    std::mt19937_64 rng(seed);
    neural::AdamState adam;
    adam.lr = s.learning_rate;
    Vector theta = model.parameters();
    Vector grad;
    const Index n = static_cast<Index>(train.size());
    for (Index epoch = 0; epoch < epochs; ++epoch) {
        double total = 0.0;
        for (const auto& batch : neural::make_batches(n, s.batch_size, rng)) {
            std::vector<Index> cols;
            for (Index i : batch) cols.push_back(train[static_cast<std::size_t>(i)]);
            const double v = model.loss(neural::gather_columns(w, cols), neural::gather_columns(p, cols), &grad);
            neural::adam_step(adam, theta, grad);
            model.set_parameters(theta);
            total += v * static_cast<double>(cols.size()) / static_cast<double>(n);
        }
        if (losses) losses->push_back(total);
        on_epoch(epoch);
    }
}

}  // namespace

ParamInferenceModel train_inference(const Matrix& w, const Matrix& p, const Vector& lower, const Vector& upper,
                                    const InferenceSchedule& schedule, InferenceReport* report) {
    const auto t0 = std::chrono::steady_clock::now();
    require_dims(w.rows() == p.rows(), "one parameter row per feature row");
    require_dims(lower.size() == p.cols() && upper.size() == p.cols(), "one bound per parameter");
    const Index n = w.rows();
    if (n < 10) throw ConfigError("parameter inference needs at least 10 samples");
    if ((w.colwise().maxCoeff() - w.colwise().minCoeff()).maxCoeff() <= 0.0)
        throw ConfigError("degenerate dataset: features are constant");
    if (schedule.epochs < 1) throw ConfigError("epochs must be >= 1");

    // Scale by the data range, falling back to the bounds for constant columns.
    Vector lo = p.colwise().minCoeff().transpose();
    Vector range = p.colwise().maxCoeff().transpose() - lo;
    for (Index j = 0; j < range.size(); ++j) {
        if (!(range(j) > 0.0)) {
            lo(j) = lower(j);
            range(j) = upper(j) > lower(j) ? upper(j) - lower(j) : 1.0;
        }
    }
    const Matrix wt = w.transpose();
    const Matrix pt = ((p.rowwise() - lo.transpose()).array().rowwise() / range.transpose().array()).matrix().transpose();

    InferenceReport rep;
    Index chosen = schedule.epochs;
    if (schedule.folds >= 2 && n >= schedule.folds) {
        // Fold membership from a seeded permutation.
        std::mt19937_64 rng(schedule.seed + 7);
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Index{0});
        for (Index i = n - 1; i > 0; --i) std::swap(order[static_cast<std::size_t>(i)],
                                                    order[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(i + 1))]);
        const Index every = std::max<Index>(1, schedule.eval_every);
        for (Index e = every; e <= schedule.epochs; e += every) rep.eval_epochs.push_back(e);
        if (rep.eval_epochs.empty() || rep.eval_epochs.back() != schedule.epochs) rep.eval_epochs.push_back(schedule.epochs);
        rep.cv_loss.assign(rep.eval_epochs.size(), 0.0);
        for (Index f = 0; f < schedule.folds; ++f) {
            std::vector<Index> train, val;
            for (Index i = 0; i < n; ++i) (i % schedule.folds == f ? val : train).push_back(order[static_cast<std::size_t>(i)]);
            ParamInferenceModel m(w.cols(), p.cols(), schedule);
            const Matrix wv = neural::gather_columns(wt, val), pv = neural::gather_columns(pt, val);
            std::size_t slot = 0;
            fit(m, wt, pt, train, schedule, schedule.epochs, schedule.seed + 100 + static_cast<std::uint64_t>(f),
                nullptr, [&](Index epoch) {
                    if (slot < rep.eval_epochs.size() && epoch + 1 == rep.eval_epochs[slot]) {
                        rep.cv_loss[slot] += m.loss(wv, pv, nullptr) / static_cast<double>(schedule.folds);
                        ++slot;
                    }
                });
        }
        std::size_t best = 0;
        for (std::size_t i = 1; i < rep.cv_loss.size(); ++i)
            if (rep.cv_loss[i] < rep.cv_loss[best]) best = i;
        chosen = rep.eval_epochs[best];
    }
    rep.chosen_epochs = chosen;

    ParamInferenceModel model(w.cols(), p.cols(), schedule);
    model.set_scaling(lo, range, lower, upper);
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    fit(model, wt, pt, all, schedule, chosen, schedule.seed + 1, &rep.train_loss, [](Index) {});
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (report) *report = std::move(rep);
    return model;
}

InferenceResult infer_parameters(const ParamInferenceModel& model, const Vector& w, Index n_draws,
                                 std::uint64_t seed) {
    if (!model.trained()) throw Error("inference model is not trained");
    require_dims(w.size() == model.input_dim(), "feature dimension mismatch");
    if (n_draws < 0) throw ConfigError("n_draws must be >= 0");
    InferenceResult out;
    model.predict(w, out.mu, out.sigma);
    const Index k = out.mu.size();
    out.samples.resize(k, n_draws);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (Index j = 0; j < n_draws; ++j)
        for (Index i = 0; i < k; ++i)
            out.samples(i, j) = std::clamp(out.mu(i) + out.sigma(i) * nd(rng), model.clamp_lower()(i),
                                           model.clamp_upper()(i));
    return out;
}

}  // namespace vprom::inference
