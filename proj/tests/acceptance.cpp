// Acceptance harness: one PASS/FAIL line per criterion.
//
//   vprom_acceptance [--config desk.json] [--toy toy.json] [--artifact dir]
//                    [--only 1,2,...] [--results file] [--strict]
//
// Exits 0 once every criterion has been evaluated; --strict turns any FAIL
// into exit code 1.

#include "gradcheck.hpp"

#include "vprom/dynamics.hpp"
#include "vprom/generative.hpp"
#include "vprom/hyperreduction.hpp"
#include "vprom/inference.hpp"
#include "vprom/log.hpp"
#include "vprom/neural.hpp"
#include "vprom/parallel.hpp"
#include "vprom/pipeline.hpp"
#include "vprom/reduction.hpp"
#include "vprom/rom.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

using namespace vprom;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// Relative displacement error in percent, ||U - U~||_F / ||U||_F.
double eps_u(const Matrix& reference, const Matrix& approx) {
    return 100.0 * (reference - approx).norm() / reference.norm();
}

// Largest principal angle between two orthonormal bases, from its sine:
// sin(theta_max) = ||(I - A A^T) B||_2.
double max_angle(const Matrix& a, const Matrix& b) {
    const Matrix residual = b - a * (a.transpose() * b);
    const double s = Eigen::JacobiSVD<Matrix>(residual).singularValues()(0);
    return std::asin(std::min(1.0, s));
}

Matrix random_orthonormal(Index n, Index r, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Matrix m(n, r);
    for (Index i = 0; i < m.size(); ++i) m(i) = nd(rng);
    Eigen::HouseholderQR<Matrix> qr(m);
    return qr.householderQ() * Matrix::Identity(n, r);
}

// ---------------------------------------------------------------------------
// Shared state for criteria 1, 2 and 4: a 30-sample training campaign.

struct Campaign {
    pipeline::CampaignConfig cfg;
    std::shared_ptr<const dynamics::FOMSystem> system;
    std::vector<pipeline::SampleRun> runs;
    std::vector<reduction::PODBasis> eps_bases;  // each sample's own epsilon order
    std::vector<reduction::PODBasis> locals;     // common order r
    Index r = 0;
    reduction::GlobalBasis global;
    Matrix v0;
    double seconds = 0.0;
};

Campaign build_campaign(pipeline::CampaignConfig cfg) {
    const auto t0 = Clock::now();
    Campaign c;
    cfg.n_train = 30;
    c.cfg = cfg;
    c.system = std::make_shared<const dynamics::FOMSystem>(dynamics::assemble_fom(cfg.fom));
    c.runs = pipeline::run_campaign(cfg, *c.system, pipeline::training_parameters(cfg), false, "train");
    for (const auto& run : c.runs) {
        c.eps_bases.push_back(reduction::compute_pod(run.displacement, cfg.pod.epsilon));
        c.r = std::max(c.r, c.eps_bases.back().order());
    }
    Matrix pooled(c.system->n_dof, 0);
    for (const auto& run : c.runs) {
        pooled.conservativeResize(Eigen::NoChange, pooled.cols() + run.displacement.cols());
        pooled.rightCols(run.displacement.cols()) = run.displacement;
    }
    for (const auto& run : c.runs) c.locals.push_back(reduction::compute_pod_order(run.displacement, c.r));
    const Index rg = std::max(reduction::compute_pod(pooled, cfg.pod.global_epsilon).order(), c.r);
    c.global = reduction::compute_pod_order(pooled, rg);
    c.v0 = reduction::reference_point(c.global, c.r);
    c.seconds = since(t0);
    return c;
}

Matrix rom_run(const Campaign& c, const reduction::PODBasis& basis, const dynamics::ParameterVector& p,
               std::optional<hyper::ECSWWeights> weights = std::nullopt) {
    const auto red = rom::galerkin_project(c.system, basis, std::move(weights));
    return basis.modes * rom::integrate_rom(red, p, c.cfg.dt, c.cfg.T).q.displacement;
}

// ---------------------------------------------------------------------------

Outcome criterion1(const Campaign& c) {
    const auto t0 = Clock::now();
    std::vector<double> common(c.runs.size()), own(c.runs.size());
    parallel_for(static_cast<Index>(c.runs.size()), [&](Index i) {
        const auto s = static_cast<std::size_t>(i);
        common[s] = eps_u(c.runs[s].displacement, rom_run(c, c.locals[s], c.runs[s].p));
        own[s] = eps_u(c.runs[s].displacement, rom_run(c, c.eps_bases[s], c.runs[s].p));
    });
    const double seconds = c.seconds + since(t0);
    const double worst = *std::max_element(common.begin(), common.end());
    double mean = 0.0, mean_own = 0.0;
    for (std::size_t s = 0; s < common.size(); ++s) {
        mean += common[s] / static_cast<double>(common.size());
        mean_own += own[s] / static_cast<double>(own.size());
    }
    const bool pass = worst < 0.1 && seconds < 120.0;
    return {pass, "truncation tier eps_u max " + fmt("%.3f", worst) + "% mean " + fmt("%.3f", mean) +
                      "% at common r=" + std::to_string(c.r) + " (own-order mean " + fmt("%.3f", mean_own) +
                      "%), target < 0.1%, " + fmt("%.1f", seconds) + " s"};
}

Outcome criterion2(const Campaign& c) {
    const auto t0 = Clock::now();
    // Projection error ratio ||U - V V^T U||_F^2 / ||U||_F^2 against the
    // energy tolerance each basis was built for.
    auto ratio = [](const Matrix& v, const Matrix& u) {
        return (u - v * (v.transpose() * u)).squaredNorm() / u.squaredNorm();
    };
    double worst_local = 0.0;
    Index checked = 0;
    bool ok = true;
    for (std::size_t s = 0; s < c.runs.size(); ++s) {
        for (const auto* b : {&c.eps_bases[s], &c.locals[s]}) {
            const double e = ratio(b->modes, c.runs[s].displacement);
            worst_local = std::max(worst_local, e);
            ok = ok && e <= c.cfg.pod.epsilon;
            ++checked;
        }
    }
    Matrix pooled(c.system->n_dof, 0);
    for (const auto& run : c.runs) {
        pooled.conservativeResize(Eigen::NoChange, pooled.cols() + run.displacement.cols());
        pooled.rightCols(run.displacement.cols()) = run.displacement;
    }
    const double global = ratio(c.global.modes, pooled);
    ok = ok && global <= c.cfg.pod.global_epsilon;
    ++checked;
    const double seconds = since(t0);
    return {ok && seconds < 1.0, std::to_string(checked) + " bases, worst local ratio " + fmt("%.3g", worst_local) +
                                     " <= " + fmt("%.0e", c.cfg.pod.epsilon) + ", global " + fmt("%.3g", global) +
                                     " <= " + fmt("%.0e", c.cfg.pod.global_epsilon) + ", " +
                                     fmt("%.3f", seconds) + " s"};
}

Outcome criterion3() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240317);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const Index n = k % 2 == 0 ? 20 : 50;
        const Index r = 2 + k % 7;
        const Matrix v0 = random_orthonormal(n, r, rng);
        const Matrix vi = random_orthonormal(n, r, rng);
        const Matrix back = reduction::grassmann_exp(v0, reduction::grassmann_log(v0, vi));
        worst = std::max(worst, max_angle(back, vi));
    }
    const double seconds = since(t0);
    return {worst <= 1e-8 && seconds < 10.0,
            "100 random pairs, worst principal angle " + fmt("%.3g", worst) + " rad <= 1e-8, " +
                fmt("%.2f", seconds) + " s"};
}

Outcome criterion4(const Campaign& c) {
    const auto t0 = Clock::now();
    const double tau = c.cfg.ecsw.tau;
    const Matrix& vg = c.global.modes;

    // Training states: every 10th step, up to 200 drawn at random, projected
    // onto span(V_global).
    std::vector<std::pair<std::size_t, Index>> cand;
    for (std::size_t s = 0; s < c.runs.size(); ++s)
        for (Index t = c.cfg.ecsw.state_stride; t < c.runs[s].displacement.cols(); t += c.cfg.ecsw.state_stride)
            cand.emplace_back(s, t);
    std::mt19937_64 rng(99);
    std::shuffle(cand.begin(), cand.end(), rng);
    cand.resize(std::min<std::size_t>(cand.size(), static_cast<std::size_t>(c.cfg.ecsw.max_states)));
    std::vector<hyper::TrainingState> states;
    for (const auto& [s, t] : cand)
        states.push_back({vg * (vg.transpose() * c.runs[s].displacement.col(t)), c.runs[s].p});

    const auto sys = hyper::build_ecsw_system(states, vg, *c.system);
    auto weights = hyper::solve_sparse_nnls(sys.G, sys.b, tau);
    weights.basis_hash = c.global.id();
    const bool positive = weights.size() > 0 && (weights.weights.array() > 0.0).all();

    // Residual rebuilt from the weighted element forces at every state,
    // against the full internal force V^T f_int(u).
    double num = 0.0, den = 0.0;
    for (const auto& st : states) {
        const Vector f_int = dynamics::evaluate_restoring(*c.system, st.u, Vector::Zero(st.u.size()), st.p).g;
        const Vector full = vg.transpose() * f_int;
        hyper::ProjectedElementForce pef(*c.system, c.global, weights, st.p);
        Vector g;
        pef.evaluate(vg.transpose() * st.u, g, nullptr);
        num += (g - full).squaredNorm();
        den += full.squaredNorm();
    }
    const double residual = std::sqrt(num / den);

    // Tier jump on the training samples: true local basis with full assembly
    // against its Grassmann reconstruction with the ECSW weights.
    std::vector<double> trunc(c.runs.size()), hyp(c.runs.size());
    parallel_for(static_cast<Index>(c.runs.size()), [&](Index i) {
        const auto s = static_cast<std::size_t>(i);
        const auto& run = c.runs[s];
        trunc[s] = eps_u(run.displacement, rom_run(c, c.locals[s], run.p));
        const auto x = reduction::compute_coefficients(reduction::grassmann_log(c.v0, c.locals[s].modes), c.global);
        hyp[s] = eps_u(run.displacement, rom_run(c, reduction::reconstruct_basis(x, c.global, c.v0), run.p, weights));
    });
    double gap = 0.0, mt = 0.0, mh = 0.0;
    for (std::size_t s = 0; s < trunc.size(); ++s) {
        gap = std::max(gap, hyp[s] - trunc[s]);
        mt += trunc[s] / static_cast<double>(trunc.size());
        mh += hyp[s] / static_cast<double>(hyp.size());
    }
    const double seconds = since(t0);
    const bool pass = residual <= tau * (1.0 + 1e-12) && positive && gap <= 5.0 && seconds < 300.0;
    return {pass, std::to_string(weights.size()) + "/" + std::to_string(c.system->n_elements()) +
                      " elements, all xi > 0: " + (positive ? "yes" : "no") + ", residual " + fmt("%.4f", residual) +
                      " <= tau " + fmt("%.2f", tau) + ", eps_u full " + fmt("%.3f", mt) + "% vs hyper " +
                      fmt("%.3f", mh) + "% (worst gap " + fmt("%.3f", gap) + " pp <= 5), " + fmt("%.1f", seconds) +
                      " s"};
}

Outcome criterion5() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(5);
    std::normal_distribution<double> nd(0.0, 1.0);
    auto randn = [&](Index r, Index c) {
        Matrix m(r, c);
        for (Index i = 0; i < m.size(); ++i) m(i) = nd(rng);
        return m;
    };
    std::vector<std::pair<std::string, double>> errs;

    // Every activation in one network, through parameters and inputs.
    {
        using neural::Activation;
        neural::DenseNetwork net({3, 7, 6, 5, 2}, {Activation::Tanh, Activation::ReLU, Activation::Softplus,
                                                   Activation::Linear},
                                 17);
        const Matrix x = randn(3, 4), up = randn(2, 4);
        neural::ForwardCache cache;
        net.forward(x, cache);
        Matrix dx;
        const Vector g = net.flatten(net.backward(cache, up, &dx));
        const Vector theta = net.parameters();
        errs.emplace_back("activations/params", testing::gradient_check(
                                                    [&](const Vector& t) {
                                                        net.set_parameters(t);
                                                        return net.forward(x).cwiseProduct(up).sum();
                                                    },
                                                    theta, g));
        net.set_parameters(theta);
        Vector xf = Eigen::Map<const Vector>(x.data(), x.size());
        Vector dxf = Eigen::Map<const Vector>(dx.data(), dx.size());
        errs.emplace_back("activations/inputs", testing::gradient_check(
                                                    [&](const Vector& t) {
                                                        const Matrix xm = Eigen::Map<const Matrix>(t.data(), 3, 4);
                                                        return net.forward(xm).cwiseProduct(up).sum();
                                                    },
                                                    xf, dxf));
    }
    // cVAE negative ELBO, encoder and decoder together.
    {
        auto model = generative::CVAEModel::create(4, 2, 3, 2, 10, 23);
        const Matrix x = (randn(8, 5).array() * 0.3 + 0.5).matrix();
        const Matrix w = randn(3, 5);
        const std::vector<Matrix> eta{randn(2, 5)};
        const Vector theta = model.parameters();
        const Vector g = generative::elbo_loss(model, x, w, eta).gradient;
        const Index n_enc = model.encoder.parameter_count();
        const double err = testing::gradient_check(
            [&](const Vector& t) {
                model.set_parameters(t);
                return generative::elbo_loss(model, x, w, eta).total;
            },
            theta, g);
        errs.emplace_back("cvae encoder+decoder (" + std::to_string(n_enc) + "+" +
                              std::to_string(theta.size() - n_enc) + " params)",
                          err);
    }
    // Both inference heads and the shared layer.
    {
        inference::InferenceSchedule s;
        s.shared_width = 16;
        s.mean_hidden1 = 8;
        s.mean_hidden2 = 4;
        s.seed = 29;
        inference::ParamInferenceModel model(5, 3, s);
        const Matrix w = randn(5, 7);
        const Matrix p = (randn(3, 7).array() * 0.2 + 0.5).matrix();
        Vector g;
        model.loss(w, p, &g);
        const Vector theta = model.parameters();
        errs.emplace_back("inference heads", testing::gradient_check(
                                                 [&](const Vector& t) {
                                                     model.set_parameters(t);
                                                     return model.loss(w, p, nullptr);
                                                 },
                                                 theta, g));
    }
    double worst = 0.0;
    std::string detail;
    for (const auto& [name, e] : errs) {
        worst = std::max(worst, e);
        detail += (detail.empty() ? "" : ", ") + name + " " + fmt("%.2g", e);
    }
    const double seconds = since(t0);
    return {worst <= 1e-5 && seconds < 60.0, "worst relative error " + fmt("%.2g", worst) + " <= 1e-5 (" + detail +
                                                 "), " + fmt("%.2f", seconds) + " s"};
}

Outcome criterion6() {
    const double kl = generative::kl_gaussian(Vector::Ones(1), Vector::Ones(1));
    neural::AdamState st;
    st.lr = 1e-3;
    const Vector start{{0.3, -1.2, 2.0, 0.0}};
    const Vector grad{{2.5, -0.4, 40.0, -7.0}};
    Vector x = start;
    neural::adam_step(st, x, grad);
    const Vector expect = -st.lr * grad.array().sign().matrix();
    const double adam_err = ((x - start) - expect).cwiseAbs().maxCoeff();
    const double nll = inference::nll_loss(Vector::Constant(1, 0.7), Vector::Constant(1, 0.7), Vector::Ones(1));
    const double nll_err = std::abs(nll - 0.5 * std::log(2.0 * std::numbers::pi));
    const bool pass = std::abs(kl - 0.5) <= 1e-12 && adam_err <= 1e-10 && nll_err <= 1e-10;
    return {pass, "KL(1,1) = " + fmt("%.15g", kl) + ", Adam step error " + fmt("%.2g", adam_err) +
                      ", NLL - ln(2 pi)/2 = " + fmt("%.2g", nll_err)};
}

Outcome criterion10(const pipeline::CampaignConfig& desk) {
    const auto t0 = Clock::now();
    auto fc = desk.fom;
    fc.n_dof = 500;
    fc.load_dofs_a.clear();
    for (Index i = 0; i < fc.n_dof; ++i) fc.load_dofs_a.push_back(i);
    fc.load_dofs_b = {fc.n_dof - 1};
    auto system = std::make_shared<const dynamics::FOMSystem>(dynamics::assemble_fom(fc));
    Vector mean(desk.space.size());
    for (Index k = 0; k < desk.space.size(); ++k) {
        const auto& m = desk.space.marginals[static_cast<std::size_t>(k)];
        mean(k) = m.kind == dynamics::Marginal::Kind::Normal ? m.mean : 0.5 * (m.lower + m.upper);
    }
    const auto p = desk.space.make(mean);
    const Vector zero = Vector::Zero(fc.n_dof);

    auto best_of = [](int n, auto&& f) {
        double best = 1e300;
        for (int i = 0; i < n; ++i) {
            const auto t = Clock::now();
            f();
            best = std::min(best, since(t));
        }
        return best;
    };
    dynamics::TimeHistory fom;
    const double fom_s = best_of(3, [&] { fom = dynamics::integrate_newmark(*system, p, desk.dt, desk.T, zero, zero); });

    const auto basis = reduction::compute_pod(fom.displacement, desk.pod.epsilon);
    std::vector<hyper::TrainingState> states;
    for (Index t = desk.ecsw.state_stride; t < fom.displacement.cols(); t += desk.ecsw.state_stride)
        states.push_back({basis.modes * (basis.modes.transpose() * fom.displacement.col(t)), p});
    const auto sys = hyper::build_ecsw_system(states, basis.modes, *system);
    auto weights = hyper::solve_sparse_nnls(sys.G, sys.b, desk.ecsw.tau);
    weights.basis_hash = basis.id();

    rom::ReducedHistory q;
    const double hrom_s = best_of(3, [&] {
        const auto red = rom::galerkin_project(system, basis, weights);
        q = rom::integrate_rom(red, p, desk.dt, desk.T);
    });
    const double err = eps_u(fom.displacement, basis.modes * q.q.displacement);
    const double seconds = since(t0);
    return {hrom_s < fom_s && seconds < 600.0,
            "n=500, r=" + std::to_string(basis.order()) + ", " + std::to_string(weights.size()) + "/" +
                std::to_string(system->n_elements()) + " elements: FOM " + fmt("%.4f", fom_s) + " s, hyper-ROM " +
                fmt("%.4f", hrom_s) + " s, speedup " + fmt("%.1f", fom_s / hrom_s) + "x (eps_u " +
                fmt("%.3f", err) + "%), " + fmt("%.1f", seconds) + " s"};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome criterion11(const pipeline::CampaignConfig& toy, const fs::path& scratch) {
    const auto t0 = Clock::now();
    std::vector<fs::path> dirs{scratch / "run_a", scratch / "run_b"};
    for (const auto& d : dirs) {
        fs::remove_all(d);
        const auto art = pipeline::train_offline(toy);
        pipeline::write_report(pipeline::evaluate(art), d);
    }
    Index files = 0;
    bool same = true;
    for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), dirs[0]);
        // Timings and the performance table carry wall-clock values.
        if (rel == "timings.json" || rel == "table.csv") continue;
        same = same && fs::exists(dirs[1] / rel) && slurp(e.path()) == slurp(dirs[1] / rel);
        ++files;
    }
    fs::remove_all(scratch);
    return {same && files >= 4, std::to_string(files) +
                                    " report files byte-identical across two seeded train+evaluate runs "
                                    "(timings excluded), " +
                                    fmt("%.1f", since(t0)) + " s"};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::string config = std::string(VPROM_SOURCE_DIR) + "/configs/desk.json";
    std::string toy_config = std::string(VPROM_SOURCE_DIR) + "/configs/toy.json";
    std::string artifact_dir, results = "acceptance_results.txt", only;
    bool strict = false;
    app.add_option("--config", config, "Desk campaign config");
    app.add_option("--toy", toy_config, "Small config for the determinism check");
    app.add_option("--artifact", artifact_dir, "Reuse a trained desk artifact instead of training one");
    app.add_option("--only", only, "Comma-separated criteria to run");
    app.add_option("--results", results, "Where to write the PASS/FAIL lines");
    app.add_flag("--strict", strict, "Exit 1 when any criterion fails");
    CLI11_PARSE(app, argc, argv);

    std::set<int> selected;
    {
        std::stringstream ss(only);
        for (std::string tok; std::getline(ss, tok, ',');)
            if (!tok.empty()) selected.insert(std::stoi(tok));
    }
    auto wanted = [&](int k) { return selected.empty() || selected.count(k) > 0; };

    log::set_level(log::Level::Error);
    set_thread_count(0);
    std::vector<std::string> lines;
    bool all_pass = true;
    auto report = [&](int k, const std::string& name, const std::function<Outcome()>& f) {
        if (!wanted(k)) return;
        Outcome o;
        try {
            o = f();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        all_pass = all_pass && o.pass;
        std::string line = "criterion " + std::to_string(k) + " [" + name + "]: " + (o.pass ? "PASS" : "FAIL") +
                           " - " + o.detail;
        std::cout << line << std::endl;
        lines.push_back(std::move(line));
    };

    try {
        const auto desk = pipeline::CampaignConfig::load(config);
        std::optional<Campaign> campaign;
        auto camp = [&]() -> const Campaign& {
            if (!campaign) campaign = build_campaign(desk);
            return *campaign;
        };

        report(1, "truncation tier", [&] { return criterion1(camp()); });
        report(2, "POD energy bound", [&] { return criterion2(camp()); });
        report(3, "Grassmann round trip", [&] { return criterion3(); });
        report(4, "ECSW", [&] { return criterion4(camp()); });
        report(5, "gradients", [&] { return criterion5(); });
        report(6, "closed forms", [&] { return criterion6(); });

        if (wanted(7) || wanted(8) || wanted(9)) {
            const auto t0 = Clock::now();
            const auto art = artifact_dir.empty() ? pipeline::train_offline(desk)
                                                  : pipeline::ModelArtifact::load(artifact_dir);
            const double train_s = since(t0);
            const auto t1 = Clock::now();
            const auto rep = pipeline::evaluate(art);
            const double eval_s = since(t1);
            const auto& timings = art.training_report.at("timings");
            const double inference_train_s = timings.value("inference", 0.0) + timings.value("features", 0.0);

            report(7, "parameter inference coverage", [&] {
                const double c = rep.inference_coverage;
                const std::string band = c >= 0.95 ? "" : (c >= 0.90 ? " (below the 95% target, within tolerance)" : "");
                return Outcome{c >= 0.90, fmt("%.1f", 100.0 * c) + "% of " + std::to_string(rep.n_samples) +
                                              " test samples inside mu +- 3 sigma, target >= 95%, hard floor 90%" +
                                              band + "; inference training " + fmt("%.1f", inference_train_s) + " s"};
            });
            report(8, "envelope coverage", [&] {
                const double f = rep.envelope_pass_fraction;
                const double total = train_s + eval_s;
                double worst = 1.0;
                for (double v : rep.envelope_coverage) worst = std::min(worst, v);
                return Outcome{f >= 0.90 && rep.envelope_coverage.size() >= 40 && total < 1200.0,
                               fmt("%.1f", 100.0 * f) + "% of " + std::to_string(rep.envelope_coverage.size()) +
                                   " test samples have >= 95% of steps inside the envelope (target >= 90%), "
                                   "worst sample " +
                                   fmt("%.1f", 100.0 * worst) + "%; pipeline " + fmt("%.0f", total) + " s" +
                                   (artifact_dir.empty() ? "" : " (training reused)")};
            });
            report(9, "error ladder", [&] {
                std::string d;
                for (const auto& t : rep.ladder) d += t.name + " " + fmt("%.3f", t.mean()) + "%, ";
                d += rep.ladder_monotone ? "monotone" : "WARNING: not monotone (soft)";
                const bool layout = rep.ladder.size() == 4 &&
                                    rep.table_csv().rfind(pipeline::kTableHeader, 0) == 0;
                return Outcome{layout, "4 tiers, mean eps_u: " + d};
            });
        }

        report(10, "speedup", [&] { return criterion10(desk); });
        report(11, "determinism", [&] {
            auto toy = pipeline::CampaignConfig::load(toy_config);
            return criterion11(toy, fs::temp_directory_path() / "vprom_acceptance_determinism");
        });
    } catch (const std::exception& e) {
        std::cerr << "acceptance harness aborted: " << e.what() << "\n";
        return 2;
    }

    std::ofstream out(results);
    for (const auto& l : lines) out << l << "\n";
    std::cout << "results written to " << results << "\n";
    return strict && !all_pass ? 1 : 0;
}
