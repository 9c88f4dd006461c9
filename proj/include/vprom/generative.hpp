#pragma once

// Conditional VAE over flattened basis coefficient matrices X (r~ x r),
// conditioned on monitoring features w.
//
//   encoder: [x ; w] -> 64 tanh -> 64 tanh -> 64 tanh -> [mu ; log sigma^2]   (2J, linear)
//   decoder: [z ; w] -> 64 linear -> 64 tanh -> 64 tanh -> x                  (linear)
//
// x lives in [0,1]-scaled coordinates; the scaler is part of the model.
// Loss per sample: 1/2 |x - x_hat|^2 + KL(N(mu, sigma^2) || N(0, I)), i.e. the
// negative ELBO of a unit-variance Gaussian decoder with its constant dropped.

#include "vprom/dynamics.hpp"
#include "vprom/monitoring.hpp"
#include "vprom/neural.hpp"
#include "vprom/reduction.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace vprom::generative {

struct CVAEModel {
    neural::DenseNetwork encoder;
    neural::DenseNetwork decoder;
    Index latent_dim = 0;
    Index cond_dim = 0;
    Index obs_rows = 0;  // r~
    Index obs_cols = 0;  // r
    monitoring::MinMaxScaler x_scaler;

    Index obs_dim() const { return obs_rows * obs_cols; }
    bool trained() const { return !decoder.empty() && x_scaler.fitted(); }

    static CVAEModel create(Index obs_rows, Index obs_cols, Index cond_dim, Index latent_dim, Index hidden,
                            std::uint64_t seed);

    /// Parameters of encoder then decoder.
    Vector parameters() const;
    void set_parameters(const Vector& theta);
};

struct Encoding {
    Matrix mu;     // J x batch
    Matrix sigma;  // J x batch, sigma = exp(logvar / 2)
};

/// Scaled observations and conditions, both with samples as columns.
Encoding encode(const CVAEModel& model, const Matrix& x_scaled, const Matrix& w);
Matrix decode(const CVAEModel& model, const Matrix& z, const Matrix& w);

Vector reparameterize(const Vector& mu, const Vector& sigma, const Vector& eta);

/// KL(N(mu, diag sigma^2) || N(0, I)) = -1/2 sum(1 + ln sigma^2 - mu^2 - sigma^2).
double kl_gaussian(const Vector& mu, const Vector& sigma);

struct LossValue {
    double total = 0.0;
    double reconstruction = 0.0;
    double kl = 0.0;
    double projection = 0.0;  // gamma1 term (unweighted), augmented loss only
    Vector gradient;          // d total / d parameters
};

/// Batch-mean negative ELBO with N_v latent draws per sample. `eta` holds one
/// J x batch matrix per draw.
LossValue elbo_loss(const CVAEModel& model, const Matrix& x_scaled, const Matrix& w, const std::vector<Matrix>& eta);

/// What the augmented loss terms need about one training sample.
struct RomContext {
    std::shared_ptr<const dynamics::FOMSystem> system;
    reduction::GlobalBasis global;
    Matrix v0;
    std::vector<dynamics::ParameterVector> params;  // per training sample
    std::vector<Matrix> references;                 // full displacement histories, n x N_t
    double dt = 0.0;
    double T = 0.0;
    Index subsample = 10;                           // time subsample for the norms
};

/// |V V^T U - U|_F / |U|_F on the subsampled reference history.
double projection_error(const Matrix& basis, const Matrix& reference, Index subsample);
/// |U~ - U|_F / |U|_F on the subsampled steps, for the ROM built on `basis`.
double rom_error(const RomContext& ctx, std::size_t sample, const reduction::PODBasis& basis);

/// Basis generated from a scaled decoder output.
reduction::PODBasis basis_from_scaled(const CVAEModel& model, const Vector& x_scaled, const RomContext& ctx);

/// elbo + gamma1 * projection error of the decoded basis, with the projection
/// gradient taken by central differences in decoded-X space, plus gamma2 * ROM
/// error added to the value only (no gradient through the integrator).
/// `samples` maps batch columns to RomContext indices.
LossValue augmented_loss(const CVAEModel& model, const Matrix& x_scaled, const Matrix& w,
                         const std::vector<Matrix>& eta, const RomContext& ctx,
                         const std::vector<std::size_t>& samples, double gamma1, double gamma2);

struct TrainingSchedule {
    Index epochs = 1250;
    Index batch_size = 64;
    double learning_rate = 1e-4;
    Index n_v = 1;
    double gamma1 = 0.15;
    double gamma2 = 0.15;
    double augmented_start = 0.8;  // fraction of epochs before the augmented terms switch on
    Index score_every = 10;        // epochs between model-selection scores in the augmented phase
    Index latent_dim = 12;
    Index hidden = 64;
    std::uint64_t seed = 0;
};

struct TrainingReport {
    std::vector<double> loss;            // per epoch, batch-mean total
    std::vector<double> reconstruction;
    std::vector<double> kl;
    std::vector<std::pair<Index, double>> scores;  // (epoch, selection score)
    Index best_epoch = -1;               // -1: final weights kept
    double seconds = 0.0;
};

/// X_flat and W have samples as rows. The augmented phase runs only when a
/// context is supplied and gamma1 or gamma2 is positive.
CVAEModel train_cvae(const Matrix& x_flat, const Matrix& w, Index obs_rows, Index obs_cols,
                     const TrainingSchedule& schedule, const RomContext* ctx = nullptr,
                     TrainingReport* report = nullptr);

struct GeneratedCoefficients {
    std::vector<reduction::CoefficientMatrix> draws;
    reduction::CoefficientMatrix mean;  // decoder at z = 0
};

GeneratedCoefficients generate_coefficients(const CVAEModel& model, const Vector& w, Index n_draws,
                                            std::uint64_t seed);

}  // namespace vprom::generative
