// vprom: offline training, online prediction and evaluation of the
// variational parametric ROM.
//
// Exit codes: 0 success, 1 internal error, 2 configuration error,
// 3 numerical failure, 64 usage error.

#include "vprom/log.hpp"
#include "vprom/matrix_io.hpp"
#include "vprom/parallel.hpp"
#include "vprom/pipeline.hpp"
#include "vprom/rom.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace vprom;
using namespace vprom::pipeline;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitUsage = 64;

struct Options {
    std::string config;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string log_level = "warn";
    Index threads = -1;
};

CampaignConfig load_config(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    std::ifstream in(o.config);
    if (!in) throw ConfigError("cannot open config file: " + o.config);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + o.config + " is not valid JSON: " + e.what());
    }
    if (o.seed) j["seed"] = *o.seed;
    if (o.threads >= 0) j["threads"] = o.threads;
    auto cfg = CampaignConfig::from_json(j);
    cfg.validate();
    return cfg;
}

fs::path out_dir(const Options& o) {
    if (!o.out_dir.empty()) return o.out_dir;
    if (const char* env = std::getenv("VPROM_OUT_DIR"); env && *env) return env;
    return "vprom_out";
}

ModelArtifact load_artifact(const Options& o) {
    auto art = ModelArtifact::load(out_dir(o) / "artifact");
    if (o.threads >= 0) art.config.threads = o.threads;
    set_thread_count(art.config.threads);
    return art;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << s;
}

int cmd_simulate(const Options& o, Index samples, bool measure) {
    const auto cfg = load_config(o);
    set_thread_count(cfg.threads);
    const auto system = dynamics::assemble_fom(cfg.fom);
    auto params = training_parameters(cfg);
    if (samples > 0 && samples < static_cast<Index>(params.size())) params.resize(static_cast<std::size_t>(samples));
    const auto runs = run_campaign(cfg, system, params, measure, "train");
    const fs::path dir = out_dir(o) / "simulate";
    fs::create_directories(dir);
    std::ostringstream csv;
    csv << "sample";
    for (const auto& name : cfg.space.names()) csv << ',' << name;
    csv << ",fom_seconds\n";
    csv.precision(17);
    for (std::size_t i = 0; i < runs.size(); ++i) {
        char name[40];
        std::snprintf(name, sizeof name, "u_%04zu.bin", i);
        io::save_matrix(dir / name, runs[i].displacement);
        if (measure) {
            std::snprintf(name, sizeof name, "measured_%04zu.bin", i);
            io::save_matrix(dir / name, runs[i].measured);
        }
        csv << i;
        for (Index k = 0; k < runs[i].p.size(); ++k) csv << ',' << runs[i].p.values(k);
        csv << ',' << runs[i].fom_seconds << '\n';
    }
    write_text(dir / "samples.csv", csv.str());
    std::cout << "simulated " << runs.size() << " samples (" << system.n_dof << " dofs, "
              << runs.front().displacement.cols() << " steps) into " << dir.string() << "\n";
    return 0;
}

int cmd_train(const Options& o) {
    const auto cfg = load_config(o);
    const auto art = train_offline(cfg);
    const fs::path dir = out_dir(o) / "artifact";
    fs::create_directories(out_dir(o));
    art.save(dir);
    std::cout << "trained: n=" << art.system->n_dof << " r=" << art.local_order << " r~=" << art.global.order()
              << " ECSW " << art.weights.size() << "/" << art.weights.n_elements_total << " elements, "
              << art.training_report.value("training_seconds", 0.0) << " s\n"
              << "artifact: " << dir.string() << "\n";
    return 0;
}

int cmd_predict(const Options& o, const std::string& signals, Index sample, Index n_basis, Index n_param) {
    const auto art = load_artifact(o);
    const auto& cfg = art.config;
    EnsembleSizes sizes{n_basis >= 0 ? n_basis : cfg.n_basis, n_param >= 0 ? n_param : cfg.n_param};
    const std::uint64_t seed = derive_seed(o.seed.value_or(cfg.seed), "predict/cli");

    PredictionBundle bundle;
    Matrix reference;
    if (!signals.empty()) {
        bundle = predict_from_signals(art, io::load_matrix(signals), sizes, seed);
    } else {
        // Synthesize the measurement of one test sample from the campaign.
        const auto params = test_parameters(cfg, sample + 1);
        const auto runs = run_campaign(cfg, *art.system, {params.back()}, true, "cli/" + std::to_string(sample));
        reference = runs.front().displacement;
        bundle = predict_from_signals(art, runs.front().measured, sizes, seed, &reference);
    }
    const fs::path dir = out_dir(o) / "prediction";
    fs::create_directories(dir);
    io::save_matrix(dir / "mean.bin", bundle.mean);
    io::save_matrix(dir / "lower.bin", bundle.lower);
    io::save_matrix(dir / "upper.bin", bundle.upper);
    json summary = {{"ensemble_size", bundle.ensemble_size},
                    {"failures", bundle.failures},
                    {"param_names", cfg.space.names()},
                    {"param_mu", std::vector<double>(bundle.param_mu.data(), bundle.param_mu.data() + bundle.param_mu.size())},
                    {"param_sigma",
                     std::vector<double>(bundle.param_sigma.data(), bundle.param_sigma.data() + bundle.param_sigma.size())},
                    {"generation_seconds", bundle.generation_seconds},
                    {"rom_seconds", bundle.rom_seconds},
                    {"total_seconds", bundle.total_seconds}};
    if (bundle.error_pct) summary["error_pct"] = *bundle.error_pct;
    if (reference.size() > 0) {
        const Index dof = rom::max_response_dof(reference);
        summary["coverage_dof"] = dof;
        summary["coverage"] = envelope_coverage(bundle, reference, dof);
        fs::create_directories(dir / "traces");
        Trace t{sample, dof, cfg.dt, reference.row(dof).transpose(), bundle.mean.row(dof).transpose(),
                bundle.lower.row(dof).transpose(), bundle.upper.row(dof).transpose()};
        write_text(dir / "traces" / "prediction.svg", svg_envelope_plot(t, "Prediction, max-response dof"));
    }
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_evaluate(const Options& o, Index samples, bool training) {
    const auto art = load_artifact(o);
    EvaluationOptions opt;
    opt.training_samples = training;
    opt.n_samples = samples;
    const auto rep = evaluate(art, opt);
    const fs::path dir = out_dir(o) / "report";
    write_report(rep, dir);
    std::cout << rep.ladder_csv() << "\n" << rep.table_csv() << "report: " << dir.string() << "\n";
    return 0;
}

int cmd_report(const Options& o) {
    const fs::path dir = out_dir(o) / "report";
    if (!fs::exists(dir / "metrics.json")) throw ConfigError("no evaluation report in " + dir.string() + "; run evaluate first");
    const auto plots = render_plots(dir);
    std::ifstream ladder(dir / "ladder.csv"), table(dir / "table.csv");
    std::ostringstream md;
    md << "# Evaluation report\n\n## Error ladder\n\n```\n" << ladder.rdbuf() << "```\n\n## Performance\n\n```\n"
       << table.rdbuf() << "```\n\n## Plots\n\n";
    for (const auto& p : plots) md << "- " << fs::relative(p, dir).string() << "\n";
    write_text(dir / "report.md", md.str());
    std::cout << md.str();
    return 0;
}

log::Level parse_level(const std::string& s) {
    if (s == "debug") return log::Level::Debug;
    if (s == "info") return log::Level::Info;
    if (s == "warn") return log::Level::Warn;
    if (s == "error") return log::Level::Error;
    if (s == "off") return log::Level::Off;
    throw ConfigError("--log-level must be debug, info, warn, error or off");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational parametric ROM: train, predict, evaluate"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    std::uint64_t seed = 0;
    app.add_option("--out-dir", o.out_dir, "Output directory (default: $VPROM_OUT_DIR or ./vprom_out)");
    auto* seed_opt = app.add_option("--seed", seed, "Override the campaign seed");
    app.add_option("--threads", o.threads, "Worker threads (0: all cores)");
    app.add_option("--log-level", o.log_level, "debug, info, warn, error or off");

    auto add_config = [&](CLI::App* sub) { sub->add_option("--config", o.config, "Campaign config (JSON)"); };

    auto* simulate = app.add_subcommand("simulate", "Run the FOM over the training design");
    add_config(simulate);
    Index sim_samples = 0;
    bool sim_measure = false;
    simulate->add_option("--samples", sim_samples, "Number of samples (default: n_train)");
    simulate->add_flag("--measure", sim_measure, "Also synthesize noisy twin measurements");

    auto* train = app.add_subcommand("train", "Offline stage: build and save the model artifact");
    add_config(train);

    auto* predict = app.add_subcommand("predict", "Online stage: predict with uncertainty envelopes");
    std::string signals;
    Index sample = 0, n_basis = -1, n_param = -1;
    predict->add_option("--signals", signals, "Sensor accelerations (binary matrix, channels x steps)");
    predict->add_option("--sample", sample, "Test sample to synthesize when no signals are given");
    predict->add_option("--n-basis", n_basis, "Basis draws");
    predict->add_option("--n-param", n_param, "Parameter draws");

    auto* evaluate = app.add_subcommand("evaluate", "Error ladder, timings and coverage on test samples");
    Index eval_samples = -1;
    bool eval_training = false;
    evaluate->add_option("--samples", eval_samples, "Number of samples (default: n_test)");
    evaluate->add_flag("--training-samples", eval_training, "Evaluate on the training samples");

    auto* report = app.add_subcommand("report", "Render the evaluation report as Markdown and SVG");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }
    if (*seed_opt) o.seed = seed;

    try {
        log::set_level(parse_level(o.log_level));
        if (o.threads >= 0) set_thread_count(o.threads);
        if (*simulate) return cmd_simulate(o, sim_samples, sim_measure);
        if (*train) return cmd_train(o);
        if (*predict) return cmd_predict(o, signals, sample, n_basis, n_param);
        if (*evaluate) return cmd_evaluate(o, eval_samples, eval_training);
        if (*report) return cmd_report(o);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
