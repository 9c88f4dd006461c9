#pragma once

// Offline campaign, online prediction and evaluation on top of the library
// modules.
//
//   train_offline:  LHS -> FOM runs -> local/global POD -> Grassmann logs ->
//                   coefficient matrices -> twin measurements + noise ->
//                   features -> cVAE -> parameter inference -> ECSW weights
//   predict_online: w -> basis draws x parameter draws (paired) -> hyper-reduced
//                   ROM ensemble -> mean trajectory and 3 sigma envelope
//   evaluate:       four-tier error ladder, timings, coverage

#include "vprom/dynamics.hpp"
#include "vprom/generative.hpp"
#include "vprom/hyperreduction.hpp"
#include "vprom/inference.hpp"
#include "vprom/monitoring.hpp"
#include "vprom/reduction.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vprom::pipeline {

using nlohmann::json;

struct PODSettings {
    double epsilon = 1e-5;         // local bases
    Index local_order = 0;         // 0: max over samples of the epsilon order
    double global_epsilon = 1e-7;  // pooled snapshots
    Index global_order = 0;        // 0: from global_epsilon, at least the local order
};

struct ECSWSettings {
    double tau = 0.01;
    Index state_stride = 10;  // every k-th step of every training history
    Index max_states = 200;
};

struct TwinSettings {
    double stiffness_cov = 0.05;  // per-element std relative to the element stiffness
    double noise_ratio = 0.07;    // measurement noise std / channel RMS
};

struct CampaignConfig {
    dynamics::FOMConfig fom;
    dynamics::ParameterSpace space;
    Index n_train = 1000;
    Index n_test = 200;
    double dt = 0.05;
    double T = 20.0;
    PODSettings pod;
    ECSWSettings ecsw;
    TwinSettings twin;
    std::vector<Index> sensor_dofs;  // empty: `sensor_count` evenly spaced
    Index sensor_count = 4;
    monitoring::FeatureConfig features;
    generative::TrainingSchedule cvae;
    Index rom_subsample = 10;        // time subsample for the augmented-loss norms
    inference::InferenceSchedule inference;
    Index n_basis = 100;             // online basis draws
    Index n_param = 50;              // online parameter draws
    Index coverage_samples = 40;     // test samples that get a full ensemble in evaluate
    Index threads = 0;
    std::uint64_t seed = 1;

    static CampaignConfig from_json(const json& j);
    static CampaignConfig load(const std::filesystem::path& path);
    json to_json() const;
    /// Throws ConfigError on inconsistent settings.
    void validate() const;
    std::uint64_t hash() const;
    monitoring::SensorLayout sensor_layout() const;
};

/// Independent sub-seed for a named stage.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& stage);

// ============================================================================
// Campaign data
// ============================================================================

struct SampleRun {
    dynamics::ParameterVector p;
    Matrix displacement;  // nominal FOM, n x N_t
    Matrix measured;      // noisy twin accelerations at the sensors, n_s x N_t
    double fom_seconds = 0.0;
};

/// Nominal FOM runs (and, with `measure`, twin measurements) for each sample.
/// `stream` separates the seeds of training and test campaigns.
std::vector<SampleRun> run_campaign(const CampaignConfig& config, const dynamics::FOMSystem& system,
                                    const std::vector<dynamics::ParameterVector>& params, bool measure,
                                    const std::string& stream);

std::vector<dynamics::ParameterVector> training_parameters(const CampaignConfig& config);
std::vector<dynamics::ParameterVector> test_parameters(const CampaignConfig& config, Index n);

// ============================================================================
// Artifact
// ============================================================================

struct ModelArtifact {
    static constexpr int kVersion = 1;

    CampaignConfig config;
    std::shared_ptr<const dynamics::FOMSystem> system;
    reduction::GlobalBasis global;
    Matrix v0;
    Index local_order = 0;
    hyper::ECSWWeights weights;
    monitoring::FeatureExtractor features;
    generative::CVAEModel cvae;
    inference::ParamInferenceModel inference;
    json training_report;

    /// Writes manifest.json, training_report.json and the .bin payloads.
    void save(const std::filesystem::path& dir) const;
    /// Throws ConfigError("artifact not found: ...") when the manifest is missing.
    static ModelArtifact load(const std::filesystem::path& dir);
};

/// Runs the whole offline stage. Each stage failure is rethrown with the
/// stage name prefixed.
ModelArtifact train_offline(const CampaignConfig& config);

// ============================================================================
// Online prediction
// ============================================================================

struct EnsembleSizes {
    Index n_basis = 100;
    Index n_param = 50;
};

struct PredictionBundle {
    double dt = 0.0;
    Matrix mean;   // displacement from the mean basis and mean parameters, n x N_t
    Matrix lower;  // mean - 3 std
    Matrix upper;  // mean + 3 std
    Index ensemble_size = 0;
    Index failures = 0;
    Vector param_mu;
    Vector param_sigma;
    std::optional<double> error_pct;  // mean trajectory vs reference, when given
    double generation_seconds = 0.0;
    double rom_seconds = 0.0;
    double total_seconds = 0.0;
};

/// Basis draw i and parameter draw i are paired; the shorter list cycles.
PredictionBundle predict_online(const ModelArtifact& artifact, const Vector& w, const EnsembleSizes& sizes,
                                std::uint64_t seed, const Matrix* reference = nullptr);
PredictionBundle predict_from_signals(const ModelArtifact& artifact, const Matrix& signals, const EnsembleSizes& sizes,
                                      std::uint64_t seed, const Matrix* reference = nullptr);

/// Fraction of steps at `dof` with lower <= reference <= upper.
double envelope_coverage(const PredictionBundle& bundle, const Matrix& reference, Index dof);

// ============================================================================
// Evaluation
// ============================================================================

struct Tier {
    std::string name;
    std::vector<double> errors;  // per sample, percent
    double max() const;
    double mean() const;
};

struct EvaluationOptions {
    bool training_samples = false;  // evaluate on the campaign's own training samples
    Index n_samples = -1;           // -1: config.n_test (or n_train for training samples)
    Index coverage_samples = -1;    // -1: config.coverage_samples
    Index trace_samples = 3;        // time traces kept for plotting
};

struct Trace {
    Index sample = 0;
    Index dof = 0;
    double dt = 0.0;
    Vector reference, mean, lower, upper;
};

struct EvaluationReport {
    std::vector<Tier> ladder;  // truncation, hyper-reduction, cVAE basis, parameter inference
    bool ladder_monotone = true;
    Index full_size = 0;
    Index model_size = 0;
    Index global_size = 0;
    Index elements_total = 0;
    Index elements_selected = 0;
    Index n_samples = 0;
    Index n_steps = 0;
    // Share of samples whose true parameters all lie within mu +- 3 sigma.
    double inference_coverage = 0.0;
    std::vector<double> envelope_coverage;  // per coverage sample
    std::vector<Index> envelope_dof;
    double envelope_pass_fraction = 0.0;    // samples with >= 95 % of steps covered
    std::vector<Trace> traces;
    // Wall clock, seconds; excluded from the deterministic metrics.
    double fom_seconds = 0.0;
    double rom_seconds = 0.0;
    double hrom_seconds = 0.0;
    double training_seconds = 0.0;

    double speedup() const { return hrom_seconds > 0.0 ? fom_seconds / hrom_seconds : 0.0; }
    json metrics_json() const;
    json timings_json() const;
    std::string table_csv() const;
    std::string ladder_csv() const;
    std::string coverage_csv() const;
};

inline constexpr const char* kTableHeader =
    "model,model_size,full_size,elements,max_error_pct,mean_error_pct,training_time_s,solution_time_s,speedup";

EvaluationReport evaluate(const ModelArtifact& artifact, const EvaluationOptions& options = {});

/// metrics.json, timings.json, table.csv, ladder.csv, coverage.csv, traces/*.csv
void write_report(const EvaluationReport& report, const std::filesystem::path& dir);

/// Renders every trace CSV under `dir`/traces as an SVG line plot with the
/// envelope shaded. Returns the files written.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& dir);

std::string svg_envelope_plot(const Trace& trace, const std::string& title);

}  // namespace vprom::pipeline
