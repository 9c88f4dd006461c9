#include <doctest.h>

#include "gradcheck.hpp"
#include "vprom/inference.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace vprom;
using namespace vprom::inference;

namespace {

struct Synthetic {
    Matrix w_train, p_train, w_test, p_test;
};

// p = A w + noise, w ~ U[0,1]^3, k = 2.
Synthetic linear_dataset(Index n_train, Index n_test, double noise, std::uint64_t seed) {
    Matrix a(2, 3);
    a << 1.0, -2.0, 0.5,
         0.3, 0.8, -1.2;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, noise);
    auto make = [&](Index n, Matrix& w, Matrix& p) {
        w.resize(n, 3);
        p.resize(n, 2);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < 3; ++j) w(i, j) = ud(rng);
            p.row(i) = (a * w.row(i).transpose()).transpose();
            if (noise > 0.0)
                for (Index j = 0; j < 2; ++j) p(i, j) += nd(rng);
        }
    };
    Synthetic s;
    make(n_train, s.w_train, s.p_train);
    make(n_test, s.w_test, s.p_test);
    return s;
}

Vector wide_bounds(double v) { return Vector::Constant(2, v); }

}  // namespace

TEST_CASE("nll_loss matches the Gaussian log-density") {
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    CHECK(nll_loss(Vector::Zero(1), Vector::Zero(1), Vector::Ones(1)) == doctest::Approx(half_log_2pi).epsilon(1e-14));

    // Direct log-density oracle for one dimension.
    auto oracle = [](double p, double mu, double s) {
        return -std::log(std::exp(-0.5 * (p - mu) * (p - mu) / (s * s)) / (s * std::sqrt(2.0 * std::numbers::pi)));
    };
    Vector p(2), mu(2), sigma(2);
    p << 0.3, -1.0;
    mu << 0.1, 0.5;
    sigma << 0.7, 2.0;
    CHECK(nll_loss(p, mu, sigma) ==
          doctest::Approx(oracle(0.3, 0.1, 0.7) + oracle(-1.0, 0.5, 2.0)).epsilon(1e-12));

    double prev = nll_loss(Vector::Zero(1), Vector::Zero(1), Vector::Ones(1));
    for (double s : {0.5, 0.1, 1e-3}) {
        const double v = nll_loss(Vector::Zero(1), Vector::Zero(1), Vector::Constant(1, s));
        CHECK(v < prev);
        prev = v;
    }
    CHECK_THROWS_AS(nll_loss(Vector::Zero(1), Vector::Zero(1), Vector::Zero(1)), NumericError);
    CHECK_THROWS_AS(nll_loss(Vector::Zero(1), Vector::Zero(1), Vector::Constant(1, -1.0)), NumericError);
    CHECK_THROWS_AS(nll_loss(Vector::Zero(2), Vector::Zero(1), Vector::Ones(1)), DimensionError);
}

TEST_CASE("inference loss gradient matches finite differences across both heads") {
    InferenceSchedule s;
    s.shared_width = 12;
    s.mean_hidden1 = 8;
    s.mean_hidden2 = 5;
    s.seed = 3;
    ParamInferenceModel model(4, 3, s);
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd(0.0, 1.0);
    Vector theta = model.parameters();
    for (Index i = 0; i < theta.size(); ++i) theta(i) += 0.05 * nd(rng);
    model.set_parameters(theta);
    Matrix w(4, 6), p(3, 6);
    for (Index i = 0; i < w.size(); ++i) w(i) = nd(rng);
    for (Index i = 0; i < p.size(); ++i) p(i) = 0.5 + 0.3 * nd(rng);

    Vector analytic;
    model.loss(w, p, &analytic);
    REQUIRE(analytic.size() == theta.size());
    const double err = testing::gradient_check(
        [&](const Vector& t) {
            model.set_parameters(t);
            return model.loss(w, p, nullptr);
        },
        theta, analytic);
    CHECK(err <= 1e-5);
}

TEST_CASE("std head output is positive") {
    InferenceSchedule s;
    ParamInferenceModel model(3, 2, s);
    Matrix w = Matrix::Constant(3, 4, -50.0), mu, sigma;
    model.predict_scaled(w, mu, sigma);
    CHECK((sigma.array() > 0.0).all());
}

TEST_CASE("train_inference recovers a noise-free linear map") {
    const Synthetic d = linear_dataset(200, 100, 0.0, 5);
    InferenceSchedule s;
    s.seed = 1;
    InferenceReport report;
    const auto model = train_inference(d.w_train, d.p_train, wide_bounds(-10), wide_bounds(10), s, &report);
    CHECK(report.chosen_epochs >= 1);
    CHECK(report.chosen_epochs <= s.epochs);
    CHECK(static_cast<Index>(report.train_loss.size()) == report.chosen_epochs);

    const Vector range = (d.p_train.colwise().maxCoeff() - d.p_train.colwise().minCoeff()).transpose();
    Vector mae = Vector::Zero(2);
    for (Index i = 0; i < d.w_test.rows(); ++i) {
        Vector mu, sigma;
        model.predict(d.w_test.row(i).transpose(), mu, sigma);
        mae += (mu - d.p_test.row(i).transpose()).cwiseAbs();
    }
    mae /= static_cast<double>(d.w_test.rows());
    MESSAGE("held-out MAE / range = " << mae(0) / range(0) << ", " << mae(1) / range(1));
    CHECK((mae.array() / range.array()).maxCoeff() <= 0.01);
}

TEST_CASE("train_inference calibrates sigma to the noise level") {
    const double noise = 0.1;
    const Synthetic d = linear_dataset(400, 200, noise, 9);
    InferenceSchedule s;
    s.seed = 2;
    s.epochs = 300;
    s.folds = 0;
    const auto model = train_inference(d.w_train, d.p_train, wide_bounds(-10), wide_bounds(10), s);
    Vector mean_sigma = Vector::Zero(2);
    for (Index i = 0; i < d.w_test.rows(); ++i) {
        Vector mu, sigma;
        model.predict(d.w_test.row(i).transpose(), mu, sigma);
        mean_sigma += sigma;
    }
    mean_sigma /= static_cast<double>(d.w_test.rows());
    MESSAGE("mean predicted sigma = " << mean_sigma.transpose() << " (true " << noise << ")");
    CHECK(((mean_sigma.array() - noise).abs() / noise).maxCoeff() <= 0.25);
}

TEST_CASE("train_inference is deterministic and validates its input") {
    const Synthetic d = linear_dataset(30, 1, 0.05, 4);
    InferenceSchedule s;
    s.epochs = 20;
    s.seed = 8;
    InferenceReport report;
    const auto a = train_inference(d.w_train, d.p_train, wide_bounds(-10), wide_bounds(10), s, &report);
    CHECK(report.eval_epochs.size() == 2);
    CHECK(report.cv_loss.size() == 2);
    CHECK((report.chosen_epochs == 10 || report.chosen_epochs == 20));
    const auto b = train_inference(d.w_train, d.p_train, wide_bounds(-10), wide_bounds(10), s);
    CHECK(a.parameters() == b.parameters());

    CHECK_THROWS_AS(train_inference(d.w_train.topRows(9), d.p_train.topRows(9), wide_bounds(-10), wide_bounds(10), s),
                    ConfigError);
    const Matrix constant = Matrix::Constant(30, 3, 0.4);
    CHECK_THROWS_AS(train_inference(constant, d.p_train, wide_bounds(-10), wide_bounds(10), s), ConfigError);
}

TEST_CASE("infer_parameters draws, de-scales and clamps") {
    const Synthetic d = linear_dataset(40, 1, 0.2, 6);
    InferenceSchedule s;
    s.epochs = 30;
    s.folds = 0;
    const auto model = train_inference(d.w_train, d.p_train, wide_bounds(-100), wide_bounds(100), s);
    const Vector w = d.w_test.row(0).transpose();

    const auto none = infer_parameters(model, w, 0, 1);
    CHECK(none.samples.cols() == 0);
    CHECK(none.mu.size() == 2);
    CHECK((none.sigma.array() > 0.0).all());

    const auto many = infer_parameters(model, w, 10000, 2);
    const Vector mean = many.samples.rowwise().mean();
    for (Index i = 0; i < 2; ++i) CHECK(std::abs(mean(i) - many.mu(i)) <= 3.0 * many.sigma(i) / 100.0);
    CHECK(infer_parameters(model, w, 5, 3).samples == infer_parameters(model, w, 5, 3).samples);

    // Tight truncation bounds: every draw sits inside them.
    auto tight = model;
    const Vector lo = none.mu - 0.5 * none.sigma, hi = none.mu + 0.5 * none.sigma;
    tight.set_scaling(model.lower(), model.range(), lo, hi);
    const auto clamped = infer_parameters(tight, w, 500, 4);
    for (Index j = 0; j < clamped.samples.cols(); ++j) {
        CHECK((clamped.samples.col(j).array() >= lo.array()).all());
        CHECK((clamped.samples.col(j).array() <= hi.array()).all());
    }

    CHECK_THROWS_AS(infer_parameters(ParamInferenceModel(3, 2, s), w, 1, 0), Error);
    CHECK_THROWS_AS(infer_parameters(model, Vector::Zero(2), 1, 0), DimensionError);
}
