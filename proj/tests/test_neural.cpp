#include <doctest.h>

#include "gradcheck.hpp"
#include "vprom/neural.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <set>

using namespace vprom;
using namespace vprom::neural;

namespace {

double weighted_output(DenseNetwork& net, const Vector& theta, const Matrix& x, const Matrix& c) {
    net.set_parameters(theta);
    return net.forward(x).cwiseProduct(c).sum();
}

double check_network(DenseNetwork net, Index batch, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix x(net.input_dim(), batch), c(net.output_dim(), batch);
    for (Index j = 0; j < batch; ++j) {
        for (Index i = 0; i < x.rows(); ++i) x(i, j) = nd(rng);
        for (Index i = 0; i < c.rows(); ++i) c(i, j) = nd(rng);
    }
    // Non-zero biases so every bias gradient is exercised.
    Vector theta = net.parameters();
    for (Index i = 0; i < theta.size(); ++i) theta(i) += 0.1 * nd(rng);
    net.set_parameters(theta);
    ForwardCache cache;
    net.forward(x, cache);
    Matrix dx;
    const Vector analytic = net.flatten(net.backward(cache, c, &dx));
    const double param_err = testing::gradient_check(
        [&](const Vector& t) { return weighted_output(net, t, x, c); }, theta, analytic);
    net.set_parameters(theta);
    const Vector x_flat = x.reshaped();
    const double input_err = testing::gradient_check(
        [&](const Vector& xf) { return net.forward(xf.reshaped(x.rows(), x.cols())).cwiseProduct(c).sum(); }, x_flat,
        dx.reshaped());
    return std::max(param_err, input_err);
}

}  // namespace

TEST_CASE("forward") {
    SUBCASE("single linear layer") {
        DenseNetwork net({3, 2}, {Activation::Linear}, 1);
        net.layers()[0].b = Vector{{0.5, -1.0}};
        const Vector x{{1.0, 2.0, 3.0}};
        CHECK((net.forward(x) - (net.layers()[0].W * x + net.layers()[0].b)).norm() <= 1e-15);
    }
    SUBCASE("tanh at zero with zero bias") {
        DenseNetwork net({4, 3}, {Activation::Tanh}, 2);
        CHECK(net.forward(Vector::Zero(4)).norm() == 0.0);
    }
    SUBCASE("softplus") {
        CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
        CHECK(softplus(800.0) == doctest::Approx(800.0));
        CHECK(softplus(-800.0) >= 0.0);
        CHECK(softplus(-30.0) > 0.0);
        DenseNetwork net({2, 3}, {Activation::Softplus}, 3);
        CHECK((net.forward(Matrix::Random(2, 50) * 100.0).array() >= 0.0).all());
    }
    SUBCASE("dimension mismatch") {
        DenseNetwork net({3, 2}, {Activation::Linear}, 1);
        CHECK_THROWS_AS(net.forward(Vector::Zero(2)), DimensionError);
    }
    SUBCASE("seeded initialization") {
        const DenseNetwork a({5, 8, 2}, {Activation::Tanh, Activation::Linear}, 7);
        const DenseNetwork b({5, 8, 2}, {Activation::Tanh, Activation::Linear}, 7);
        const DenseNetwork c({5, 8, 2}, {Activation::Tanh, Activation::Linear}, 8);
        CHECK(a.parameters() == b.parameters());
        CHECK(a.parameters() != c.parameters());
        const double limit = std::sqrt(6.0 / 13.0);
        CHECK(a.layers()[0].W.cwiseAbs().maxCoeff() <= limit);
    }
}

TEST_CASE("backward") {
    SUBCASE("every activation matches central differences") {
        for (auto act : {Activation::Tanh, Activation::ReLU, Activation::Linear, Activation::Softplus}) {
            CAPTURE(to_string(act));
            const DenseNetwork net({5, 7, 6, 3}, {act, act, act}, 11);
            CHECK(check_network(net, 4, 21) <= 1e-5);
        }
    }
    SUBCASE("network shapes used by the cVAE and the inference heads") {
        using A = Activation;
        CHECK(check_network(DenseNetwork({30, 64, 64, 64, 24}, {A::Tanh, A::Tanh, A::Tanh, A::Linear}, 1), 2, 3) <= 1e-5);
        CHECK(check_network(DenseNetwork({18, 64, 64, 64, 24}, {A::Linear, A::Tanh, A::Tanh, A::Linear}, 2), 2, 4) <= 1e-5);
        CHECK(check_network(DenseNetwork({6, 256, 64, 16, 4}, {A::ReLU, A::ReLU, A::ReLU, A::Linear}, 3), 2, 5) <= 1e-5);
        CHECK(check_network(DenseNetwork({6, 256, 64, 16, 4}, {A::ReLU, A::ReLU, A::ReLU, A::Softplus}, 4), 2, 6) <= 1e-5);
    }
    SUBCASE("zero upstream gradient") {
        const DenseNetwork net({3, 4, 2}, {Activation::Tanh, Activation::Linear}, 5);
        ForwardCache cache;
        net.forward(Matrix::Random(3, 5), cache);
        CHECK(net.flatten(net.backward(cache, Matrix::Zero(2, 5))).norm() == 0.0);
    }
    SUBCASE("linear net: gradient of |y|^2 / 2 with respect to W") {
        DenseNetwork net({3, 2}, {Activation::Linear}, 6);
        net.layers()[0].b = Vector{{0.3, -0.2}};
        const Vector x{{1.0, -2.0, 0.5}};
        ForwardCache cache;
        const Matrix y = net.forward(x, cache);
        const auto g = net.backward(cache, y);
        const Vector expected = net.layers()[0].W * x + net.layers()[0].b;
        CHECK((g.dW[0] - expected * x.transpose()).norm() <= 1e-14);
        CHECK((g.db[0] - expected).norm() <= 1e-14);
    }
}

TEST_CASE("adam_step") {
    SUBCASE("first step is -lr sign(g)") {
        AdamState s;
        s.lr = 1e-3;
        Vector p{{1.0, -2.0, 0.5}};
        const Vector start = p;
        adam_step(s, p, Vector{{0.4, -3.0, 1.0}});
        const Vector expected{{-1e-3, 1e-3, -1e-3}};
        CHECK(((p - start) - expected).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("zero gradient leaves parameters unchanged") {
        AdamState s;
        Vector p = Vector::Random(4);
        const Vector start = p;
        adam_step(s, p, Vector::Zero(4));
        CHECK(p == start);
    }
    SUBCASE("two steps with a constant gradient follow the moment recursion") {
        AdamState s;
        s.lr = 0.01;
        const double g = 0.3;
        Vector p = Vector::Constant(1, 2.0);
        adam_step(s, p, Vector::Constant(1, g));
        adam_step(s, p, Vector::Constant(1, g));
        double m = 0.0, v = 0.0, x = 2.0;
        for (int t = 1; t <= 2; ++t) {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            const double mh = m / (1.0 - std::pow(0.9, t));
            const double vh = v / (1.0 - std::pow(0.999, t));
            x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        }
        CHECK(std::abs(p(0) - x) <= 1e-12);
        CHECK(s.step == 2);
    }
}

TEST_CASE("batches and persistence") {
    std::mt19937_64 rng(1);
    const auto batches = make_batches(10, 4, rng);
    CHECK(batches.size() == 3);
    std::set<Index> seen;
    for (const auto& b : batches) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 10);

    const auto dir = std::filesystem::temp_directory_path() / "vprom_neural_test";
    std::filesystem::create_directories(dir);
    const DenseNetwork net({4, 6, 2}, {Activation::ReLU, Activation::Softplus}, 9);
    const auto manifest = net.save(dir, "net");
    const auto back = DenseNetwork::load(manifest, dir);
    CHECK(back.parameters() == net.parameters());
    const Matrix x = Matrix::Random(4, 3);
    CHECK(back.forward(x) == net.forward(x));
    std::filesystem::remove_all(dir);
}
