#include "vprom/neural.hpp"

#include "vprom/matrix_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vprom::neural {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Tanh: return "tanh";
        case Activation::ReLU: return "relu";
        case Activation::Linear: return "linear";
        case Activation::Softplus: return "softplus";
    }
    return "linear";
}

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "relu") return Activation::ReLU;
    if (s == "linear") return Activation::Linear;
    if (s == "softplus") return Activation::Softplus;
    throw ConfigError("unknown activation '" + s + "'");
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

namespace {

Matrix apply(Activation a, const Matrix& z) {
    switch (a) {
        case Activation::Tanh: return z.array().tanh().matrix();
        case Activation::ReLU: return z.cwiseMax(0.0);
        case Activation::Linear: return z;
        case Activation::Softplus: return z.unaryExpr([](double x) { return softplus(x); });
    }
    return z;
}

// d activation / d z, elementwise.
Matrix derivative(Activation a, const Matrix& z) {
    switch (a) {
        case Activation::Tanh: return (1.0 - z.array().tanh().square()).matrix();
        case Activation::ReLU: return z.unaryExpr([](double x) { return x > 0.0 ? 1.0 : 0.0; });
        case Activation::Linear: return Matrix::Ones(z.rows(), z.cols());
        case Activation::Softplus:
            return z.unaryExpr([](double x) {
                return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            });
    }
    return Matrix::Ones(z.rows(), z.cols());
}

}  // namespace

DenseNetwork::DenseNetwork(const std::vector<Index>& sizes, const std::vector<Activation>& activations,
                           std::uint64_t seed) {
    if (sizes.size() < 2) throw ConfigError("a network needs input and output sizes");
    if (activations.size() != sizes.size() - 1) throw ConfigError("one activation per layer");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const Index in = sizes[l], out = sizes[l + 1];
        if (in < 1 || out < 1) throw ConfigError("layer sizes must be positive");
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> ud(-limit, limit);
        Layer layer;
        layer.W.resize(out, in);
        for (Index j = 0; j < in; ++j)
            for (Index i = 0; i < out; ++i) layer.W(i, j) = ud(rng);
        layer.b = Vector::Zero(out);
        layer.activation = activations[l];
        layers_.push_back(std::move(layer));
    }
}

Index DenseNetwork::parameter_count() const {
    Index n = 0;
    for (const auto& l : layers_) n += l.W.size() + l.b.size();
    return n;
}

Matrix DenseNetwork::forward(const Matrix& x) const {
    require_dims(x.rows() == input_dim(), "network input dimension mismatch");
    Matrix a = x;
    for (const auto& l : layers_) a = apply(l.activation, (l.W * a).colwise() + l.b);
    return a;
}

Matrix DenseNetwork::forward(const Matrix& x, ForwardCache& cache) const {
    require_dims(x.rows() == input_dim(), "network input dimension mismatch");
    cache.inputs.clear();
    cache.pre.clear();
    Matrix a = x;
    for (const auto& l : layers_) {
        cache.inputs.push_back(a);
        cache.pre.push_back((l.W * a).colwise() + l.b);
        a = apply(l.activation, cache.pre.back());
    }
    cache.output = a;
    return a;
}

Gradients DenseNetwork::backward(const ForwardCache& cache, const Matrix& upstream, Matrix* input_grad) const {
    require_dims(cache.pre.size() == layers_.size(), "forward cache does not match the network");
    require_dims(upstream.rows() == output_dim() && upstream.cols() == cache.output.cols(),
                 "upstream gradient shape mismatch");
    Gradients g;
    g.dW.resize(layers_.size());
    g.db.resize(layers_.size());
    Matrix delta = upstream;
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const auto& l = layers_[k];
        delta = delta.cwiseProduct(derivative(l.activation, cache.pre[k]));
        g.dW[k] = delta * cache.inputs[k].transpose();
        g.db[k] = delta.rowwise().sum();
        if (k > 0 || input_grad) delta = l.W.transpose() * delta;
    }
    if (input_grad) *input_grad = delta;
    return g;
}

Vector DenseNetwork::parameters() const {
    Vector theta(parameter_count());
    Index at = 0;
    for (const auto& l : layers_) {
        theta.segment(at, l.W.size()) = l.W.reshaped();
        at += l.W.size();
        theta.segment(at, l.b.size()) = l.b;
        at += l.b.size();
    }
    return theta;
}

void DenseNetwork::set_parameters(const Vector& theta) {
    require_dims(theta.size() == parameter_count(), "parameter vector length mismatch");
    Index at = 0;
    for (auto& l : layers_) {
        l.W.reshaped() = theta.segment(at, l.W.size());
        at += l.W.size();
        l.b = theta.segment(at, l.b.size());
        at += l.b.size();
    }
}

Vector DenseNetwork::flatten(const Gradients& g) const {
    Vector out(parameter_count());
    Index at = 0;
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        out.segment(at, g.dW[k].size()) = g.dW[k].reshaped();
        at += g.dW[k].size();
        out.segment(at, g.db[k].size()) = g.db[k];
        at += g.db[k].size();
    }
    return out;
}

nlohmann::json DenseNetwork::save(const std::filesystem::path& dir, const std::string& prefix) const {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        const std::string w = prefix + "_W" + std::to_string(k) + ".bin";
        const std::string b = prefix + "_b" + std::to_string(k) + ".bin";
        io::save_matrix(dir / w, l.W);
        io::save_vector(dir / b, l.b);
        j["layers"].push_back({{"in", l.W.cols()}, {"out", l.W.rows()}, {"activation", to_string(l.activation)},
                               {"weights", w}, {"bias", b}});
    }
    return j;
}

DenseNetwork DenseNetwork::load(const nlohmann::json& manifest, const std::filesystem::path& dir) {
    DenseNetwork net;
    for (const auto& jl : manifest.at("layers")) {
        Layer l;
        l.W = io::load_matrix(dir / jl.at("weights").get<std::string>());
        l.b = io::load_vector(dir / jl.at("bias").get<std::string>());
        l.activation = activation_from_string(jl.at("activation").get<std::string>());
        if (l.W.rows() != jl.at("out").get<Index>() || l.W.cols() != jl.at("in").get<Index>() ||
            l.b.size() != l.W.rows())
            throw ConfigError("network manifest disagrees with the weight files");
        if (!net.layers_.empty() && net.layers_.back().W.rows() != l.W.cols())
            throw ConfigError("network layers do not chain");
        net.layers_.push_back(std::move(l));
    }
    return net;
}

void adam_step(AdamState& s, Vector& params, const Vector& grad) {
    require_dims(params.size() == grad.size(), "Adam: parameter and gradient lengths differ");
    if (s.m.size() != params.size()) {
        s.m = Vector::Zero(params.size());
        s.v = Vector::Zero(params.size());
        s.step = 0;
    }
    ++s.step;
    s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
    s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    params.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

std::vector<std::vector<Index>> make_batches(Index n, Index batch_size, std::mt19937_64& rng) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    // Fisher-Yates with explicit draws: std::shuffle is not portable across libraries.
    for (Index i = n - 1; i > 0; --i) {
        const Index j = static_cast<Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    std::vector<std::vector<Index>> batches;
    for (Index start = 0; start < n; start += batch_size) {
        const Index end = std::min(n, start + batch_size);
        batches.emplace_back(order.begin() + start, order.begin() + end);
    }
    return batches;
}

Matrix gather_columns(const Matrix& m, const std::vector<Index>& cols) {
    Matrix out(m.rows(), static_cast<Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Index>(i)) = m.col(cols[i]);
    return out;
}

}  // namespace vprom::neural
