#include "vprom/generative.hpp"

#include "vprom/log.hpp"
#include "vprom/rom.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <random>

namespace vprom::generative {

using neural::Activation;
using neural::DenseNetwork;

CVAEModel CVAEModel::create(Index obs_rows, Index obs_cols, Index cond_dim, Index latent_dim, Index hidden,
                            std::uint64_t seed) {
    if (obs_rows < 1 || obs_cols < 1 || cond_dim < 0 || latent_dim < 1 || hidden < 1)
        throw ConfigError("cVAE dimensions must be positive");
    CVAEModel m;
    m.latent_dim = latent_dim;
    m.cond_dim = cond_dim;
    m.obs_rows = obs_rows;
    m.obs_cols = obs_cols;
    const Index obs = obs_rows * obs_cols;
    m.encoder = DenseNetwork({obs + cond_dim, hidden, hidden, hidden, 2 * latent_dim},
                             {Activation::Tanh, Activation::Tanh, Activation::Tanh, Activation::Linear}, seed);
    m.decoder = DenseNetwork({latent_dim + cond_dim, hidden, hidden, hidden, obs},
                             {Activation::Linear, Activation::Tanh, Activation::Tanh, Activation::Linear},
                             seed ^ 0x9e3779b97f4a7c15ULL);
    return m;
}

Vector CVAEModel::parameters() const {
    const Vector e = encoder.parameters(), d = decoder.parameters();
    Vector out(e.size() + d.size());
    out << e, d;
    return out;
}

void CVAEModel::set_parameters(const Vector& theta) {
    const Index ne = encoder.parameter_count();
    require_dims(theta.size() == ne + decoder.parameter_count(), "cVAE parameter length mismatch");
    encoder.set_parameters(theta.head(ne));
    decoder.set_parameters(theta.tail(theta.size() - ne));
}

namespace {

Matrix stack(const Matrix& top, const Matrix& bottom) {
    require_dims(top.cols() == bottom.cols(), "batch sizes differ");
    Matrix out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
}

// Upstream gradient on the draw-0 decoder output, with the value it adds.
using ExtraTerm = std::function<double(const Matrix& x_hat, Matrix& upstream)>;

LossValue elbo_impl(const CVAEModel& model, const Matrix& x, const Matrix& w, const std::vector<Matrix>& eta,
                    const ExtraTerm& extra) {
    require_dims(x.rows() == model.obs_dim(), "observation dimension mismatch");
    require_dims(w.rows() == model.cond_dim && w.cols() == x.cols(), "condition dimension mismatch");
    if (eta.empty()) throw ConfigError("at least one latent draw is required");
    const Index B = x.cols();
    const Index J = model.latent_dim;
    const double nb = static_cast<double>(B);
    const double nv = static_cast<double>(eta.size());

    neural::ForwardCache enc_cache;
    const Matrix enc_out = model.encoder.forward(stack(x, w), enc_cache);
    const Matrix mu = enc_out.topRows(J);
    const Matrix logvar = enc_out.bottomRows(J);
    const Matrix sigma = (0.5 * logvar.array()).exp().matrix();

    LossValue out;
    Matrix d_mu = Matrix::Zero(J, B), d_logvar = Matrix::Zero(J, B);
    Vector dec_grad = Vector::Zero(model.decoder.parameter_count());
    for (std::size_t l = 0; l < eta.size(); ++l) {
        require_dims(eta[l].rows() == J && eta[l].cols() == B, "latent draw shape mismatch");
        const Matrix z = mu + eta[l].cwiseProduct(sigma);
        neural::ForwardCache dec_cache;
        const Matrix x_hat = model.decoder.forward(stack(z, w), dec_cache);
        const Matrix diff = x_hat - x;
        out.reconstruction += 0.5 * diff.squaredNorm() / (nv * nb);
        Matrix upstream = diff / (nv * nb);
        if (l == 0 && extra) out.projection = extra(x_hat, upstream);
        Matrix d_in;
        dec_grad += model.decoder.flatten(model.decoder.backward(dec_cache, upstream, &d_in));
        const Matrix dz = d_in.topRows(J);
        d_mu += dz;
        d_logvar += 0.5 * dz.cwiseProduct(eta[l]).cwiseProduct(sigma);
    }
    for (Index b = 0; b < B; ++b) out.kl += kl_gaussian(mu.col(b), sigma.col(b)) / nb;
    d_mu += mu / nb;
    d_logvar += 0.5 * (sigma.array().square() - 1.0).matrix() / nb;

    const Vector enc_grad = model.encoder.flatten(model.encoder.backward(enc_cache, stack(d_mu, d_logvar)));
    out.gradient.resize(enc_grad.size() + dec_grad.size());
    out.gradient << enc_grad, dec_grad;
    out.total = out.reconstruction + out.kl;
    return out;
}

Matrix subsample_columns(const Matrix& m, Index step) {
    const Index s = std::max<Index>(1, step);
    const Index n = (m.cols() + s - 1) / s;
    Matrix out(m.rows(), n);
    for (Index j = 0; j < n; ++j) out.col(j) = m.col(j * s);
    return out;
}

// Modes of the generated basis without the parent bookkeeping; the
// difference quotients below evaluate this many times per sample.
Matrix modes_from_scaled(const CVAEModel& model, const Vector& x_scaled, const RomContext& ctx) {
    const Vector x = model.x_scaler.inverse(x_scaled);
    reduction::TangentVector t;
    t.gamma = ctx.global.modes * Eigen::Map<const Matrix>(x.data(), model.obs_rows, model.obs_cols);
    t.gamma -= ctx.v0 * (ctx.v0.transpose() * t.gamma);
    return reduction::grassmann_exp(ctx.v0, t);
}

}  // namespace

Encoding encode(const CVAEModel& model, const Matrix& x_scaled, const Matrix& w) {
    require_dims(x_scaled.rows() == model.obs_dim(), "observation dimension mismatch");
    require_dims(w.rows() == model.cond_dim, "condition dimension mismatch");
    const Matrix out = model.encoder.forward(stack(x_scaled, w));
    Encoding e;
    e.mu = out.topRows(model.latent_dim);
    e.sigma = (0.5 * out.bottomRows(model.latent_dim).array()).exp().matrix();
    return e;
}

Matrix decode(const CVAEModel& model, const Matrix& z, const Matrix& w) {
    require_dims(z.rows() == model.latent_dim, "latent dimension mismatch");
    require_dims(w.rows() == model.cond_dim, "condition dimension mismatch");
    return model.decoder.forward(stack(z, w));
}

Vector reparameterize(const Vector& mu, const Vector& sigma, const Vector& eta) {
    require_dims(mu.size() == sigma.size() && mu.size() == eta.size(), "reparameterize: shapes differ");
    return mu + eta.cwiseProduct(sigma);
}

double kl_gaussian(const Vector& mu, const Vector& sigma) {
    require_dims(mu.size() == sigma.size(), "kl_gaussian: shapes differ");
    if ((sigma.array() <= 0.0).any()) throw NumericError("kl_gaussian: sigma must be positive");
    const auto s2 = sigma.array().square();
    return -0.5 * (1.0 + s2.log() - mu.array().square() - s2).sum();
}

LossValue elbo_loss(const CVAEModel& model, const Matrix& x_scaled, const Matrix& w, const std::vector<Matrix>& eta) {
    return elbo_impl(model, x_scaled, w, eta, nullptr);
}

double projection_error(const Matrix& basis, const Matrix& reference, Index subsample) {
    require_dims(basis.rows() == reference.rows(), "basis and reference dof counts differ");
    const Matrix u = subsample_columns(reference, subsample);
    const double den = u.norm();
    if (!(den > 0.0)) throw NumericError("reference history has zero norm");
    return (basis * (basis.transpose() * u) - u).norm() / den;
}

double rom_error(const RomContext& ctx, std::size_t sample, const reduction::PODBasis& basis) {
    if (sample >= ctx.params.size() || sample >= ctx.references.size()) throw DimensionError("sample out of range");
    const Matrix u = subsample_columns(ctx.references[sample], ctx.subsample);
    try {
        const auto red = rom::galerkin_project(ctx.system, basis);
        const auto q = rom::integrate_rom(red, ctx.params[sample], ctx.dt, ctx.T);
        require_dims(q.q.displacement.cols() == ctx.references[sample].cols(), "ROM and reference step counts differ");
        const Matrix approx = subsample_columns(basis.modes * q.q.displacement, ctx.subsample);
        return (approx - u).norm() / u.norm();
    } catch (const NumericError& e) {
        log::warn(std::string("ROM score skipped a sample: ") + e.what());
        return 1.0;  // penalty: 100 % error
    }
}

reduction::PODBasis basis_from_scaled(const CVAEModel& model, const Vector& x_scaled, const RomContext& ctx) {
    const Vector x = model.x_scaler.inverse(x_scaled);
    return reduction::reconstruct_basis(reduction::CoefficientMatrix::unflatten(x, model.obs_rows, model.obs_cols),
                                        ctx.global, ctx.v0);
}

LossValue augmented_loss(const CVAEModel& model, const Matrix& x_scaled, const Matrix& w,
                         const std::vector<Matrix>& eta, const RomContext& ctx,
                         const std::vector<std::size_t>& samples, double gamma1, double gamma2) {
    if (gamma1 < 0.0 || gamma2 < 0.0) throw ConfigError("gamma weights must be non-negative");
    require_dims(static_cast<Index>(samples.size()) == x_scaled.cols(), "one context sample per batch column");
    if (gamma1 == 0.0 && gamma2 == 0.0) return elbo_loss(model, x_scaled, w, eta);

    const double nb = static_cast<double>(x_scaled.cols());
    // Rows of X whose global mode lies in span(V0) are removed by the
    // horizontal projection, so the term is flat along them and their
    // difference quotients are skipped. With V0 taken from V_global these are
    // the first r rows.
    const Matrix& vg = ctx.global.modes;
    const Matrix off = vg - ctx.v0 * (ctx.v0.transpose() * vg);
    std::vector<Index> live;
    for (Index i = 0; i < model.obs_dim(); ++i)
        if (off.col(i % model.obs_rows).norm() > 1e-12) live.push_back(i);

    ExtraTerm extra = [&](const Matrix& x_hat, Matrix& upstream) {
        double mean_err = 0.0;
        for (Index b = 0; b < x_hat.cols(); ++b) {
            const Matrix& ref = ctx.references[samples[static_cast<std::size_t>(b)]];
            auto term = [&](const Vector& xs) {
                return projection_error(modes_from_scaled(model, xs, ctx), ref, ctx.subsample);
            };
            Vector xs = x_hat.col(b);
            mean_err += term(xs) / nb;
            if (gamma1 == 0.0) continue;
            const double h = 1e-6;
            for (Index i : live) {
                const double keep = xs(i);
                xs(i) = keep + h;
                const double up = term(xs);
                xs(i) = keep - h;
                const double down = term(xs);
                xs(i) = keep;
                upstream(i, b) += gamma1 * (up - down) / (2.0 * h) / nb;
            }
        }
        return mean_err;
    };
    LossValue out = elbo_impl(model, x_scaled, w, eta, extra);
    out.total += gamma1 * out.projection;
    if (gamma2 > 0.0) {
        // Value only: the ROM solve is not differentiated.
        const Encoding e = encode(model, x_scaled, w);
        Matrix z = e.mu + eta.front().cwiseProduct(e.sigma);
        const Matrix x_hat = decode(model, z, w);
        double rom = 0.0;
        for (Index b = 0; b < x_hat.cols(); ++b) {
            const std::size_t s = samples[static_cast<std::size_t>(b)];
            rom += rom_error(ctx, s, basis_from_scaled(model, x_hat.col(b), ctx)) / nb;
        }
        out.total += gamma2 * rom;
    }
    return out;
}

CVAEModel train_cvae(const Matrix& x_flat, const Matrix& w, Index obs_rows, Index obs_cols,
                     const TrainingSchedule& schedule, const RomContext* ctx, TrainingReport* report) {
    const auto t0 = std::chrono::steady_clock::now();
    require_dims(x_flat.rows() == w.rows(), "one condition row per observation row");
    require_dims(x_flat.cols() == obs_rows * obs_cols, "observation width must equal r~ * r");
    if (x_flat.rows() < 1) throw ConfigError("cVAE training set is empty");
    if (schedule.epochs < 1 || schedule.n_v < 1) throw ConfigError("epochs and N_v must be >= 1");
    if (!(schedule.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (schedule.gamma1 < 0.0 || schedule.gamma2 < 0.0) throw ConfigError("gamma weights must be non-negative");

    CVAEModel model = CVAEModel::create(obs_rows, obs_cols, w.cols(), schedule.latent_dim, schedule.hidden,
                                        schedule.seed);
    model.x_scaler = monitoring::MinMaxScaler::fit(x_flat);
    const Matrix xs = model.x_scaler.transform(x_flat).transpose();
    const Matrix ws = w.transpose();
    const Index n = xs.cols();

    const bool augmented = ctx != nullptr && (schedule.gamma1 > 0.0 || schedule.gamma2 > 0.0);
    if (augmented) require_dims(static_cast<Index>(ctx->references.size()) == n, "one reference per training sample");
    const Index aug_start = static_cast<Index>(std::floor(schedule.augmented_start * static_cast<double>(schedule.epochs)));

    std::mt19937_64 rng(schedule.seed + 1);
    std::normal_distribution<double> nd(0.0, 1.0);
    neural::AdamState adam;
    adam.lr = schedule.learning_rate;
    Vector theta = model.parameters();

    TrainingReport rep;
    double best_score = std::numeric_limits<double>::infinity();
    Vector best_theta;

    auto selection_score = [&]() {
        // Mean prediction (z = 0), which is what the online stage uses.
        const Matrix x_hat = decode(model, Matrix::Zero(model.latent_dim, n), ws);
        double s = 0.0;
        for (Index b = 0; b < n; ++b) {
            const auto basis = basis_from_scaled(model, x_hat.col(b), *ctx);
            double term = 0.0;
            if (schedule.gamma1 > 0.0)
                term += schedule.gamma1 * projection_error(basis.modes, ctx->references[static_cast<std::size_t>(b)],
                                                           ctx->subsample);
            if (schedule.gamma2 > 0.0) term += schedule.gamma2 * rom_error(*ctx, static_cast<std::size_t>(b), basis);
            s += term / static_cast<double>(n);
        }
        return s;
    };

    for (Index epoch = 0; epoch < schedule.epochs; ++epoch) {
        const bool late = augmented && epoch >= aug_start;
        double loss = 0.0, rec = 0.0, kl = 0.0;
        for (const auto& batch : neural::make_batches(n, schedule.batch_size, rng)) {
            const Index B = static_cast<Index>(batch.size());
            std::vector<Matrix> eta(static_cast<std::size_t>(schedule.n_v), Matrix(model.latent_dim, B));
            for (auto& e : eta)
                for (Index j = 0; j < B; ++j)
                    for (Index i = 0; i < model.latent_dim; ++i) e(i, j) = nd(rng);
            const Matrix xb = neural::gather_columns(xs, batch);
            const Matrix wb = neural::gather_columns(ws, batch);
            LossValue lv;
            if (late && schedule.gamma1 > 0.0) {
                std::vector<std::size_t> ids(batch.begin(), batch.end());
                lv = augmented_loss(model, xb, wb, eta, *ctx, ids, schedule.gamma1, 0.0);
            } else {
                lv = elbo_loss(model, xb, wb, eta);
            }
            adam_step(adam, theta, lv.gradient);
            model.set_parameters(theta);
            const double frac = static_cast<double>(B) / static_cast<double>(n);
            loss += lv.total * frac;
            rec += lv.reconstruction * frac;
            kl += lv.kl * frac;
        }
        rep.loss.push_back(loss);
        rep.reconstruction.push_back(rec);
        rep.kl.push_back(kl);
        if (late && ((epoch - aug_start) % std::max<Index>(1, schedule.score_every) == 0 ||
                     epoch == schedule.epochs - 1)) {
            const double s = selection_score();
            rep.scores.emplace_back(epoch, s);
            if (s < best_score) {
                best_score = s;
                best_theta = theta;
                rep.best_epoch = epoch;
            }
        }
    }
    if (best_theta.size() > 0) model.set_parameters(best_theta);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (report) *report = std::move(rep);
    return model;
}

GeneratedCoefficients generate_coefficients(const CVAEModel& model, const Vector& w, Index n_draws,
                                            std::uint64_t seed) {
    if (!model.trained()) throw Error("cVAE model is not trained");
    require_dims(w.size() == model.cond_dim, "condition dimension mismatch");
    if (n_draws < 0) throw ConfigError("n_draws must be >= 0");
    auto to_coeffs = [&](const Vector& x_scaled) {
        return reduction::CoefficientMatrix::unflatten(model.x_scaler.inverse(x_scaled), model.obs_rows,
                                                       model.obs_cols);
    };
    GeneratedCoefficients out;
    out.mean = to_coeffs(decode(model, Vector::Zero(model.latent_dim), w).col(0));
    if (n_draws == 0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix eps(model.latent_dim, n_draws);
    for (Index j = 0; j < n_draws; ++j)
        for (Index i = 0; i < model.latent_dim; ++i) eps(i, j) = nd(rng);
    const Matrix x_hat = decode(model, eps, w.replicate(1, n_draws));
    for (Index j = 0; j < n_draws; ++j) out.draws.push_back(to_coeffs(x_hat.col(j)));
    return out;
}

}  // namespace vprom::generative
