#pragma once

// Dense MLPs with exact reverse-mode gradients and Adam. Float64 throughout.
// Batches are stored as columns: X is (input_dim x batch).

#include "vprom/common.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace vprom::neural {

enum class Activation { Tanh, ReLU, Linear, Softplus };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Numerically stable log(1 + e^x).
double softplus(double x);

struct Layer {
    Matrix W;  // out x in
    Vector b;
    Activation activation = Activation::Linear;
};

struct ForwardCache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
    Matrix output;
};

struct Gradients {
    std::vector<Matrix> dW;
    std::vector<Vector> db;
};

class DenseNetwork {
public:
    DenseNetwork() = default;
    /// sizes = {in, h1, ..., out}; one activation per layer. Glorot-uniform
    /// weights and zero biases drawn from `seed`.
    DenseNetwork(const std::vector<Index>& sizes, const std::vector<Activation>& activations, std::uint64_t seed);

    Index input_dim() const { return layers_.empty() ? 0 : layers_.front().W.cols(); }
    Index output_dim() const { return layers_.empty() ? 0 : layers_.back().W.rows(); }
    Index parameter_count() const;
    bool empty() const { return layers_.empty(); }

    Matrix forward(const Matrix& x) const;
    Matrix forward(const Matrix& x, ForwardCache& cache) const;

    /// Gradients of sum(upstream .* output) with respect to every parameter.
    /// `input_grad`, when given, receives the gradient with respect to x.
    Gradients backward(const ForwardCache& cache, const Matrix& upstream, Matrix* input_grad = nullptr) const;

    /// Parameters in layer order, each W column-major followed by b.
    Vector parameters() const;
    void set_parameters(const Vector& theta);
    Vector flatten(const Gradients& g) const;

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }

    nlohmann::json save(const std::filesystem::path& dir, const std::string& prefix) const;
    static DenseNetwork load(const nlohmann::json& manifest, const std::filesystem::path& dir);

private:
    std::vector<Layer> layers_;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    Vector m;
    Vector v;
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState& state, Vector& params, const Vector& grad);

/// Shuffled mini-batch index lists covering 0..n-1.
std::vector<std::vector<Index>> make_batches(Index n, Index batch_size, std::mt19937_64& rng);

/// Columns of `m` selected by `cols`.
Matrix gather_columns(const Matrix& m, const std::vector<Index>& cols);

}  // namespace vprom::neural
