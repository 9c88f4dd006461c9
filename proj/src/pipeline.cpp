#include "vprom/pipeline.hpp"

#include "vprom/log.hpp"
#include "vprom/parallel.hpp"
#include "vprom/rom.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

namespace vprom::pipeline {

using dynamics::ParameterVector;
using dynamics::TimeHistory;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Rethrows any library error with the stage name in front, keeping its type.
template <class F>
auto stage(const char* name, json& timings, F&& f) -> decltype(f()) {
    const auto t0 = Clock::now();
    log::info(std::string("stage ") + name);
    auto tag = [name](const std::exception& e) { return std::string(name) + ": " + e.what(); };
    try {
        if constexpr (std::is_void_v<decltype(f())>) {
            f();
            timings[name] = seconds_since(t0);
        } else {
            auto out = f();
            timings[name] = seconds_since(t0);
            return out;
        }
    } catch (const ConfigError& e) {
        throw ConfigError(tag(e));
    } catch (const DimensionError& e) {
        throw DimensionError(tag(e));
    } catch (const NumericError& e) {
        throw NumericError(tag(e));
    } catch (const Error& e) {
        throw Error(tag(e));
    }
}

Vector clamp_to(const Vector& v, const Vector& lo, const Vector& hi) { return v.cwiseMax(lo).cwiseMin(hi); }

Matrix parameter_matrix(const std::vector<ParameterVector>& params) {
    Matrix p(static_cast<Index>(params.size()), params.empty() ? 0 : params.front().size());
    for (std::size_t i = 0; i < params.size(); ++i) p.row(static_cast<Index>(i)) = params[i].values.transpose();
    return p;
}

Matrix rom_displacement(const ModelArtifact& art, const reduction::PODBasis& basis, const ParameterVector& p,
                        bool hyper) {
    const auto red = rom::galerkin_project(art.system, basis,
                                           hyper ? std::optional<hyper::ECSWWeights>(art.weights) : std::nullopt);
    const auto q = rom::integrate_rom(red, p, art.config.dt, art.config.T);
    return basis.modes * q.q.displacement;
}

// Training states for ECSW: a seeded draw without replacement of up to
// `max_states` from every `stride`-th step of every history, projected onto
// span(V_global).
std::vector<hyper::TrainingState> ecsw_states(const std::vector<SampleRun>& runs, const Matrix& vg,
                                              const ECSWSettings& s, std::uint64_t seed) {
    std::vector<std::pair<std::size_t, Index>> candidates;
    for (std::size_t i = 0; i < runs.size(); ++i)
        for (Index t = s.state_stride; t < runs[i].displacement.cols(); t += s.state_stride) candidates.emplace_back(i, t);
    const std::size_t keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(s.max_states));
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < keep; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(rng() % (candidates.size() - k));
        std::swap(candidates[k], candidates[j]);
    }
    candidates.resize(keep);
    std::sort(candidates.begin(), candidates.end());
    std::vector<hyper::TrainingState> states;
    for (const auto& [i, t] : candidates) {
        const Vector u = runs[i].displacement.col(t);
        states.push_back({vg * (vg.transpose() * u), runs[i].p});
    }
    return states;
}

}  // namespace

// ============================================================================
// Campaign
// ============================================================================

std::vector<ParameterVector> training_parameters(const CampaignConfig& config) {
    return dynamics::sample_parameters_lhs(config.space, config.n_train, derive_seed(config.seed, "lhs/train"));
}

std::vector<ParameterVector> test_parameters(const CampaignConfig& config, Index n) {
    return dynamics::sample_parameters_lhs(config.space, n, derive_seed(config.seed, "lhs/test"));
}

std::vector<SampleRun> run_campaign(const CampaignConfig& config, const dynamics::FOMSystem& system,
                                    const std::vector<ParameterVector>& params, bool measure,
                                    const std::string& stream) {
    const auto layout = config.sensor_layout();
    const Vector zero = Vector::Zero(system.n_dof);
    std::vector<SampleRun> runs(params.size());
    parallel_for(static_cast<Index>(params.size()), [&](Index i) {
        auto& run = runs[static_cast<std::size_t>(i)];
        run.p = params[static_cast<std::size_t>(i)];
        const auto t0 = Clock::now();
        run.displacement = dynamics::integrate_newmark(system, run.p, config.dt, config.T, zero, zero).displacement;
        run.fom_seconds = seconds_since(t0);
        if (!measure) return;
        const std::string tag = stream + "/" + std::to_string(i);
        const double sigma = config.twin.stiffness_cov * config.fom.k_lin *
                             run.p.get(dynamics::param::kStiffnessScale, 1.0);
        const auto twin = dynamics::make_perturbed_twin(system, run.p, sigma, derive_seed(config.seed, "twin/" + tag));
        const TimeHistory h = dynamics::integrate_newmark(twin, run.p, config.dt, config.T, zero, zero);
        run.measured = monitoring::add_measurement_noise(monitoring::sample_sensors(h.acceleration, layout),
                                                         config.twin.noise_ratio,
                                                         derive_seed(config.seed, "noise/" + tag));
    });
    return runs;
}

// ============================================================================
// Offline stage
// ============================================================================

ModelArtifact train_offline(const CampaignConfig& config) {
    const auto t0 = Clock::now();
    json timings = json::object();
    stage("config", timings, [&] { config.validate(); });
    set_thread_count(config.threads);

    ModelArtifact art;
    art.config = config;
    art.system = stage("assembly", timings, [&] {
        return std::make_shared<const dynamics::FOMSystem>(dynamics::assemble_fom(config.fom));
    });
    const auto params = stage("sampling", timings, [&] { return training_parameters(config); });
    const auto runs = stage("fom", timings, [&] { return run_campaign(config, *art.system, params, true, "train"); });
    const Index n_samples = static_cast<Index>(runs.size());

    // Local bases share one order so that every X has the same shape.
    std::vector<reduction::PODBasis> locals(runs.size());
    std::vector<Index> eps_orders(runs.size());
    stage("pod", timings, [&] {
        parallel_for(n_samples, [&](Index i) {
            const auto& u = runs[static_cast<std::size_t>(i)].displacement;
            eps_orders[static_cast<std::size_t>(i)] = reduction::compute_pod(u, config.pod.epsilon).order();
        });
        art.local_order = config.pod.local_order > 0 ? config.pod.local_order
                                                     : *std::max_element(eps_orders.begin(), eps_orders.end());
        parallel_for(n_samples, [&](Index i) {
            locals[static_cast<std::size_t>(i)] =
                reduction::compute_pod_order(runs[static_cast<std::size_t>(i)].displacement, art.local_order);
        });
        Matrix pooled(art.system->n_dof, 0);
        {
            Index cols = 0;
            for (const auto& r : runs) cols += r.displacement.cols();
            pooled.resize(art.system->n_dof, cols);
            Index at = 0;
            for (const auto& r : runs) {
                pooled.middleCols(at, r.displacement.cols()) = r.displacement;
                at += r.displacement.cols();
            }
        }
        Index global_order = config.pod.global_order;
        if (global_order == 0) {
            const auto probe = reduction::compute_pod(pooled, config.pod.global_epsilon);
            global_order = std::max(probe.order(), art.local_order);
        }
        art.global = reduction::compute_pod_order(pooled, global_order);
        for (const auto& b : locals)
            if (b.order() != art.local_order)
                throw NumericError("a training history has rank below the common local order " +
                                   std::to_string(art.local_order));
        if (art.global.order() < art.local_order)
            throw NumericError("pooled snapshots have rank below the local order");
        art.v0 = reduction::reference_point(art.global, art.local_order);
    });

    Matrix x_flat(n_samples, art.global.order() * art.local_order);
    stage("grassmann", timings, [&] {
        parallel_for(n_samples, [&](Index i) {
            const auto t = reduction::grassmann_log(art.v0, locals[static_cast<std::size_t>(i)].modes);
            x_flat.row(i) = reduction::compute_coefficients(t, art.global).flatten().transpose();
        });
    });

    Matrix w;
    stage("features", timings, [&] {
        art.features = monitoring::FeatureExtractor(config.features, config.sensor_layout());
        Matrix raw;
        for (Index i = 0; i < n_samples; ++i) {
            const Vector f = monitoring::raw_features(runs[static_cast<std::size_t>(i)].measured, config.dt,
                                                      art.features.layout(), config.features);
            if (i == 0) raw.resize(n_samples, f.size());
            raw.row(i) = f.transpose();
        }
        art.features.fit(raw);
        w = art.features.transform_dataset(raw);
    });

    generative::TrainingReport cvae_report;
    stage("cvae", timings, [&] {
        generative::RomContext ctx;
        ctx.system = art.system;
        ctx.global = art.global;
        ctx.v0 = art.v0;
        ctx.params = params;
        for (const auto& r : runs) ctx.references.push_back(r.displacement);
        ctx.dt = config.dt;
        ctx.T = config.T;
        ctx.subsample = config.rom_subsample;
        art.cvae = generative::train_cvae(x_flat, w, art.global.order(), art.local_order, config.cvae, &ctx,
                                          &cvae_report);
    });

    inference::InferenceReport inf_report;
    stage("inference", timings, [&] {
        art.inference = inference::train_inference(w, parameter_matrix(params), config.space.lower_bounds(),
                                                   config.space.upper_bounds(), config.inference, &inf_report);
    });

    stage("ecsw", timings, [&] {
        const auto states = ecsw_states(runs, art.global.modes, config.ecsw, derive_seed(config.seed, "ecsw"));
        const auto g = hyper::build_ecsw_system(states, art.global.modes, *art.system);
        art.weights = hyper::solve_sparse_nnls(g.G, g.b, config.ecsw.tau);
        art.weights.basis_hash = art.global.id();
        if (!art.weights.converged)
            log::warn("ECSW stopped at relative residual " + std::to_string(art.weights.residual) + " above tau");
    });

    json cvae_scores = json::array();
    for (const auto& [epoch, score] : cvae_report.scores) cvae_scores.push_back({{"epoch", epoch}, {"score", score}});
    art.training_report = {
        {"config_hash", hash_hex(config.hash())},
        {"n_train", n_samples},
        {"local_order", art.local_order},
        {"local_epsilon_orders", eps_orders},
        {"global_order", art.global.order()},
        {"cvae",
         {{"loss", cvae_report.loss},
          {"reconstruction", cvae_report.reconstruction},
          {"kl", cvae_report.kl},
          {"scores", cvae_scores},
          {"best_epoch", cvae_report.best_epoch}}},
        {"inference",
         {{"eval_epochs", inf_report.eval_epochs},
          {"cv_loss", inf_report.cv_loss},
          {"chosen_epochs", inf_report.chosen_epochs},
          {"train_loss", inf_report.train_loss}}},
        {"ecsw",
         {{"selected", art.weights.size()},
          {"total", art.weights.n_elements_total},
          {"residual", art.weights.residual},
          {"converged", art.weights.converged},
          {"residual_history", art.weights.residual_history}}},
        {"timings", timings},
        {"training_seconds", seconds_since(t0)}};
    return art;
}

// ============================================================================
// Online stage
// ============================================================================

PredictionBundle predict_online(const ModelArtifact& art, const Vector& w, const EnsembleSizes& sizes,
                                std::uint64_t seed, const Matrix* reference) {
    const auto t0 = Clock::now();
    if (w.size() != art.cvae.cond_dim || w.size() != art.inference.input_dim())
        throw DimensionError("feature vector has dimension " + std::to_string(w.size()) + ", the model expects " +
                             std::to_string(art.cvae.cond_dim));
    if (sizes.n_basis < 0 || sizes.n_param < 0) throw ConfigError("ensemble sizes must be >= 0");
    const auto& space = art.config.space;

    const auto gen = generative::generate_coefficients(art.cvae, w, sizes.n_basis, derive_seed(seed, "basis"));
    const auto inf = inference::infer_parameters(art.inference, w, sizes.n_param, derive_seed(seed, "params"));
    const auto mean_basis = reduction::reconstruct_basis(gen.mean, art.global, art.v0);
    std::vector<reduction::PODBasis> bases;
    for (const auto& c : gen.draws) bases.push_back(reduction::reconstruct_basis(c, art.global, art.v0));
    const auto mean_params = space.make(clamp_to(inf.mu, space.lower_bounds(), space.upper_bounds()));

    PredictionBundle out;
    out.dt = art.config.dt;
    out.param_mu = inf.mu;
    out.param_sigma = inf.sigma;
    out.generation_seconds = seconds_since(t0);

    const auto t_rom = Clock::now();
    out.mean = rom_displacement(art, mean_basis, mean_params, true);

    const Index members = std::max(sizes.n_basis, sizes.n_param);
    std::vector<Matrix> runs(static_cast<std::size_t>(members));
    std::vector<char> ok(static_cast<std::size_t>(members), 0);
    parallel_for(members, [&](Index i) {
        const auto& basis = sizes.n_basis > 0 ? bases[static_cast<std::size_t>(i % sizes.n_basis)] : mean_basis;
        const auto p = sizes.n_param > 0 ? space.make(inf.samples.col(i % sizes.n_param)) : mean_params;
        try {
            runs[static_cast<std::size_t>(i)] = rom_displacement(art, basis, p, true);
            ok[static_cast<std::size_t>(i)] = 1;
        } catch (const NumericError& e) {
            log::debug(std::string("ensemble member failed: ") + e.what());
        }
    });
    out.rom_seconds = seconds_since(t_rom);
    out.ensemble_size = members;
    out.failures = static_cast<Index>(std::count(ok.begin(), ok.end(), 0));
    if (members > 0 && 2 * out.failures > members)
        throw NumericError("prediction failed: " + std::to_string(out.failures) + " of " + std::to_string(members) +
                           " ensemble members diverged");

    // Sample std of the successful members around their own mean.
    Matrix std_dev = Matrix::Zero(out.mean.rows(), out.mean.cols());
    const Index good = members - out.failures;
    if (good > 1) {
        Matrix centre = Matrix::Zero(out.mean.rows(), out.mean.cols());
        for (Index i = 0; i < members; ++i)
            if (ok[static_cast<std::size_t>(i)]) centre += runs[static_cast<std::size_t>(i)];
        centre /= static_cast<double>(good);
        for (Index i = 0; i < members; ++i)
            if (ok[static_cast<std::size_t>(i)])
                std_dev.array() += (runs[static_cast<std::size_t>(i)] - centre).array().square();
        std_dev = (std_dev / static_cast<double>(good - 1)).cwiseSqrt();
    }
    out.lower = out.mean - 3.0 * std_dev;
    out.upper = out.mean + 3.0 * std_dev;
    if (reference) {
        require_dims(reference->rows() == out.mean.rows() && reference->cols() == out.mean.cols(),
                     "reference history shape differs from the prediction");
        out.error_pct = rom::error_metric(*reference, out.mean);
    }
    out.total_seconds = seconds_since(t0);
    return out;
}

PredictionBundle predict_from_signals(const ModelArtifact& art, const Matrix& signals, const EnsembleSizes& sizes,
                                      std::uint64_t seed, const Matrix* reference) {
    if (signals.rows() != art.features.layout().size())
        throw DimensionError("expected " + std::to_string(art.features.layout().size()) + " sensor channels, got " +
                             std::to_string(signals.rows()));
    return predict_online(art, art.features.extract(signals, art.config.dt).w, sizes, seed, reference);
}

double envelope_coverage(const PredictionBundle& b, const Matrix& reference, Index dof) {
    require_dims(reference.cols() == b.mean.cols() && dof >= 0 && dof < reference.rows(),
                 "reference does not match the prediction");
    Index inside = 0;
    for (Index t = 0; t < reference.cols(); ++t)
        if (reference(dof, t) >= b.lower(dof, t) && reference(dof, t) <= b.upper(dof, t)) ++inside;
    return static_cast<double>(inside) / static_cast<double>(reference.cols());
}

// ============================================================================
// Evaluation
// ============================================================================

double Tier::max() const { return errors.empty() ? 0.0 : *std::max_element(errors.begin(), errors.end()); }

double Tier::mean() const {
    if (errors.empty()) return 0.0;
    double s = 0.0;
    for (double e : errors) s += e;
    return s / static_cast<double>(errors.size());
}

EvaluationReport evaluate(const ModelArtifact& art, const EvaluationOptions& options) {
    const auto& cfg = art.config;
    set_thread_count(cfg.threads);
    const Index n = options.n_samples >= 0 ? options.n_samples : (options.training_samples ? cfg.n_train : cfg.n_test);
    if (n < 1) throw ConfigError("evaluation needs at least one sample");
    if (options.training_samples && n > cfg.n_train) throw ConfigError("more evaluation samples than training samples");

    std::vector<ParameterVector> params;
    if (options.training_samples) {
        params = training_parameters(cfg);
        params.resize(static_cast<std::size_t>(n));
    } else {
        params = test_parameters(cfg, n);
    }
    const auto runs = run_campaign(cfg, *art.system, params, true, options.training_samples ? "train" : "test");

    EvaluationReport rep;
    rep.full_size = art.system->n_dof;
    rep.model_size = art.local_order;
    rep.global_size = art.global.order();
    rep.elements_total = art.system->n_elements();
    rep.elements_selected = art.weights.size();
    rep.n_samples = n;
    rep.n_steps = runs.front().displacement.cols();
    rep.training_seconds = art.training_report.value("training_seconds", 0.0);
    const char* names[4] = {"Truncation", "Hyper-reduction", "cVAE basis interp.", "Parameter inference"};
    for (const char* name : names) rep.ladder.push_back({name, std::vector<double>(static_cast<std::size_t>(n), 0.0)});

    std::vector<char> covered(static_cast<std::size_t>(n), 0);
    std::vector<double> rom_t(static_cast<std::size_t>(n)), hrom_t(static_cast<std::size_t>(n));
    const auto& space = cfg.space;
    parallel_for(n, [&](Index i) {
        const auto s = static_cast<std::size_t>(i);
        const auto& run = runs[s];
        const Vector w = art.features.extract(run.measured, cfg.dt).w;
        auto tier = [&](int k, auto&& body) {
            try {
                rep.ladder[static_cast<std::size_t>(k)].errors[s] = rom::error_metric(run.displacement, body());
            } catch (const NumericError& e) {
                log::warn(std::string(names[k]) + " tier failed on sample " + std::to_string(i) + ": " + e.what());
                rep.ladder[static_cast<std::size_t>(k)].errors[s] = 100.0;
            }
        };
        const auto truth = reduction::compute_pod_order(run.displacement, art.local_order);
        tier(0, [&] {
            const auto t0 = Clock::now();
            Matrix u = rom_displacement(art, truth, run.p, false);
            rom_t[s] = seconds_since(t0);
            return u;
        });
        tier(1, [&] {
            const auto x = reduction::compute_coefficients(reduction::grassmann_log(art.v0, truth.modes), art.global);
            return rom_displacement(art, reduction::reconstruct_basis(x, art.global, art.v0), run.p, true);
        });
        const auto generated =
            reduction::reconstruct_basis(generative::generate_coefficients(art.cvae, w, 0, 0).mean, art.global, art.v0);
        tier(2, [&] { return rom_displacement(art, generated, run.p, true); });
        const auto inf = inference::infer_parameters(art.inference, w, 0, 0);
        tier(3, [&] {
            const auto t0 = Clock::now();
            Matrix u = rom_displacement(art, generated,
                                        space.make(clamp_to(inf.mu, space.lower_bounds(), space.upper_bounds())), true);
            hrom_t[s] = seconds_since(t0);
            return u;
        });
        covered[s] = ((run.p.values - inf.mu).cwiseAbs().array() <= 3.0 * inf.sigma.array()).all();
    });

    Index inside = 0;
    for (char c : covered) inside += c;
    rep.inference_coverage = static_cast<double>(inside) / static_cast<double>(n);
    for (std::size_t k = 1; k < rep.ladder.size(); ++k)
        if (rep.ladder[k].mean() < rep.ladder[k - 1].mean()) rep.ladder_monotone = false;
    if (!rep.ladder_monotone) log::warn("error ladder is not monotone across the four tiers");

    for (Index i = 0; i < n; ++i) {
        rep.fom_seconds += runs[static_cast<std::size_t>(i)].fom_seconds / static_cast<double>(n);
        rep.rom_seconds += rom_t[static_cast<std::size_t>(i)] / static_cast<double>(n);
        rep.hrom_seconds += hrom_t[static_cast<std::size_t>(i)] / static_cast<double>(n);
    }

    // Full ensembles on the first coverage samples.
    const Index n_cov = std::min(n, options.coverage_samples >= 0 ? options.coverage_samples : cfg.coverage_samples);
    const EnsembleSizes sizes{cfg.n_basis, cfg.n_param};
    Index passed = 0;
    for (Index i = 0; i < n_cov; ++i) {
        const auto& run = runs[static_cast<std::size_t>(i)];
        const Index dof = rom::max_response_dof(run.displacement);
        double cov = 0.0;
        try {
            const auto bundle = predict_from_signals(art, run.measured, sizes,
                                                     derive_seed(cfg.seed, "predict/" + std::to_string(i)),
                                                     &run.displacement);
            cov = envelope_coverage(bundle, run.displacement, dof);
            if (i < options.trace_samples) {
                Trace tr{i, dof, cfg.dt, run.displacement.row(dof).transpose(), bundle.mean.row(dof).transpose(),
                         bundle.lower.row(dof).transpose(), bundle.upper.row(dof).transpose()};
                rep.traces.push_back(std::move(tr));
            }
        } catch (const NumericError& e) {
            log::warn("prediction failed on sample " + std::to_string(i) + ": " + e.what());
        }
        rep.envelope_coverage.push_back(cov);
        rep.envelope_dof.push_back(dof);
        if (cov >= 0.95) ++passed;
    }
    rep.envelope_pass_fraction = n_cov > 0 ? static_cast<double>(passed) / static_cast<double>(n_cov) : 0.0;
    return rep;
}

}  // namespace vprom::pipeline
