#include "vprom/pipeline.hpp"

#include <fstream>
#include <set>

namespace vprom::pipeline {

using dynamics::FOMConfig;
using dynamics::Marginal;

namespace {

// Reads a JSON object and rejects keys nobody asked for.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }
    ~Reader() noexcept(false) {
        if (std::uncaught_exceptions() > 0) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }
    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }
    const json& at(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }
    const std::string& where() const { return where_; }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

const char* ground_name(FOMConfig::Ground g) {
    switch (g) {
        case FOMConfig::Ground::Ends: return "ends";
        case FOMConfig::Ground::First: return "first";
        case FOMConfig::Ground::All: return "all";
    }
    return "ends";
}

FOMConfig::Ground ground_from(const std::string& s) {
    if (s == "ends") return FOMConfig::Ground::Ends;
    if (s == "first") return FOMConfig::Ground::First;
    if (s == "all") return FOMConfig::Ground::All;
    throw ConfigError("fom.ground must be ends, first or all");
}

const char* excitation_name(dynamics::Excitation::Kind k) {
    switch (k) {
        case dynamics::Excitation::Kind::None: return "none";
        case dynamics::Excitation::Kind::Step: return "step";
        case dynamics::Excitation::Kind::MultiSine: return "multisine";
    }
    return "none";
}

dynamics::Excitation::Kind excitation_from(const std::string& s) {
    if (s == "none") return dynamics::Excitation::Kind::None;
    if (s == "step") return dynamics::Excitation::Kind::Step;
    if (s == "multisine") return dynamics::Excitation::Kind::MultiSine;
    throw ConfigError("fom.excitation.kind must be none, step or multisine");
}

void read_fom(const json& j, FOMConfig& f) {
    Reader r(j, "fom");
    r.get("n_dof", f.n_dof);
    r.get("mass", f.mass);
    r.get("k_lin", f.k_lin);
    r.get("k_cub", f.k_cub);
    r.get("ground_k_lin", f.ground_k_lin);
    r.get("ground_k_cub", f.ground_k_cub);
    std::string ground = ground_name(f.ground);
    r.get("ground", ground);
    f.ground = ground_from(ground);
    r.get("alpha_m", f.alpha_m);
    r.get("alpha_k", f.alpha_k);
    r.get("load_dofs_a", f.load_dofs_a);
    r.get("load_dofs_b", f.load_dofs_b);
    if (r.has("excitation")) {
        Reader e(r.at("excitation"), "fom.excitation");
        std::string kind = excitation_name(f.excitation);
        e.get("kind", kind);
        f.excitation = excitation_from(kind);
        e.get("n_components", f.n_components);
        e.get("f_min", f.f_min);
        e.get("f_max", f.f_max);
        e.get("phase_seed", f.phase_seed);
    }
}

Marginal read_marginal(const json& j, std::size_t i) {
    Reader r(j, "parameters[" + std::to_string(i) + "]");
    Marginal m;
    r.get("name", m.name);
    if (m.name.empty()) throw ConfigError(r.where() + ": name is required");
    std::string dist = "uniform";
    r.get("distribution", dist);
    if (dist == "normal") {
        m.kind = Marginal::Kind::Normal;
        r.get("mean", m.mean);
        r.get("std", m.std);
        m.lower = m.mean - 3.0 * m.std;
        m.upper = m.mean + 3.0 * m.std;
    } else if (dist == "uniform") {
        m.kind = Marginal::Kind::Uniform;
    } else {
        throw ConfigError(r.where() + ": distribution must be normal or uniform");
    }
    r.get("lower", m.lower);
    r.get("upper", m.upper);
    return m;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& stage) {
    // FNV-1a of the stage name folded into a splitmix64 step.
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : stage) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (h | 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

CampaignConfig CampaignConfig::from_json(const json& j) {
    CampaignConfig c;
    Reader r(j, "config");
    r.get("seed", c.seed);
    r.get("threads", c.threads);
    r.get("n_train", c.n_train);
    r.get("n_test", c.n_test);
    r.get("dt", c.dt);
    r.get("T", c.T);
    if (!r.has("fom")) throw ConfigError("config: fom section is required");
    read_fom(r.at("fom"), c.fom);
    if (!r.has("parameters")) throw ConfigError("config: parameters section is required");
    const json& params = r.at("parameters");
    if (!params.is_array()) throw ConfigError("config.parameters must be an array");
    for (std::size_t i = 0; i < params.size(); ++i) c.space.marginals.push_back(read_marginal(params[i], i));

    if (r.has("pod")) {
        Reader s(r.at("pod"), "pod");
        s.get("epsilon", c.pod.epsilon);
        s.get("local_order", c.pod.local_order);
        s.get("global_epsilon", c.pod.global_epsilon);
        s.get("global_order", c.pod.global_order);
    }
    if (r.has("ecsw")) {
        Reader s(r.at("ecsw"), "ecsw");
        s.get("tau", c.ecsw.tau);
        s.get("state_stride", c.ecsw.state_stride);
        s.get("max_states", c.ecsw.max_states);
    }
    if (r.has("twin")) {
        Reader s(r.at("twin"), "twin");
        s.get("stiffness_cov", c.twin.stiffness_cov);
        s.get("noise_ratio", c.twin.noise_ratio);
    }
    if (r.has("sensors")) {
        Reader s(r.at("sensors"), "sensors");
        s.get("dofs", c.sensor_dofs);
        s.get("count", c.sensor_count);
    }
    if (r.has("features")) {
        Reader s(r.at("features"), "features");
        std::string mode = "statistical";
        s.get("mode", mode);
        if (mode == "statistical")
            c.features.mode = monitoring::FeatureConfig::Mode::Statistical;
        else if (mode == "arx")
            c.features.mode = monitoring::FeatureConfig::Mode::ARX;
        else
            throw ConfigError("features.mode must be statistical or arx");
        s.get("n_a", c.features.n_a);
        s.get("n_b", c.features.n_b);
        s.get("delay", c.features.delay);
        s.get("lambda", c.features.lambda);
        s.get("hidden_units", c.features.hidden_units);
        s.get("window", c.features.window);
        s.get("pca_dim", c.features.pca_dim);
    }
    if (r.has("cvae")) {
        Reader s(r.at("cvae"), "cvae");
        s.get("epochs", c.cvae.epochs);
        s.get("batch_size", c.cvae.batch_size);
        s.get("learning_rate", c.cvae.learning_rate);
        s.get("n_v", c.cvae.n_v);
        s.get("gamma1", c.cvae.gamma1);
        s.get("gamma2", c.cvae.gamma2);
        s.get("augmented_start", c.cvae.augmented_start);
        s.get("score_every", c.cvae.score_every);
        s.get("latent_dim", c.cvae.latent_dim);
        s.get("hidden", c.cvae.hidden);
        s.get("rom_subsample", c.rom_subsample);
    }
    if (r.has("inference")) {
        Reader s(r.at("inference"), "inference");
        s.get("epochs", c.inference.epochs);
        s.get("batch_size", c.inference.batch_size);
        s.get("learning_rate", c.inference.learning_rate);
        s.get("folds", c.inference.folds);
        s.get("eval_every", c.inference.eval_every);
    }
    if (r.has("prediction")) {
        Reader s(r.at("prediction"), "prediction");
        s.get("n_basis", c.n_basis);
        s.get("n_param", c.n_param);
        s.get("coverage_samples", c.coverage_samples);
    }
    c.cvae.seed = derive_seed(c.seed, "cvae");
    c.inference.seed = derive_seed(c.seed, "inference");
    return c;
}

CampaignConfig CampaignConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

json CampaignConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["threads"] = threads;
    j["n_train"] = n_train;
    j["n_test"] = n_test;
    j["dt"] = dt;
    j["T"] = T;
    j["fom"] = {{"n_dof", fom.n_dof},
                {"mass", fom.mass},
                {"k_lin", fom.k_lin},
                {"k_cub", fom.k_cub},
                {"ground_k_lin", fom.ground_k_lin},
                {"ground_k_cub", fom.ground_k_cub},
                {"ground", ground_name(fom.ground)},
                {"alpha_m", fom.alpha_m},
                {"alpha_k", fom.alpha_k},
                {"load_dofs_a", fom.load_dofs_a},
                {"load_dofs_b", fom.load_dofs_b},
                {"excitation",
                 {{"kind", excitation_name(fom.excitation)},
                  {"n_components", fom.n_components},
                  {"f_min", fom.f_min},
                  {"f_max", fom.f_max},
                  {"phase_seed", fom.phase_seed}}}};
    j["parameters"] = json::array();
    for (const auto& m : space.marginals) {
        json jm = {{"name", m.name}, {"lower", m.lower}, {"upper", m.upper}};
        if (m.kind == Marginal::Kind::Normal) {
            jm["distribution"] = "normal";
            jm["mean"] = m.mean;
            jm["std"] = m.std;
        } else {
            jm["distribution"] = "uniform";
        }
        j["parameters"].push_back(jm);
    }
    j["pod"] = {{"epsilon", pod.epsilon},
                {"local_order", pod.local_order},
                {"global_epsilon", pod.global_epsilon},
                {"global_order", pod.global_order}};
    j["ecsw"] = {{"tau", ecsw.tau}, {"state_stride", ecsw.state_stride}, {"max_states", ecsw.max_states}};
    j["twin"] = {{"stiffness_cov", twin.stiffness_cov}, {"noise_ratio", twin.noise_ratio}};
    j["sensors"] = {{"dofs", sensor_dofs}, {"count", sensor_count}};
    j["features"] = {{"mode", features.mode == monitoring::FeatureConfig::Mode::ARX ? "arx" : "statistical"},
                     {"n_a", features.n_a},
                     {"n_b", features.n_b},
                     {"delay", features.delay},
                     {"lambda", features.lambda},
                     {"hidden_units", features.hidden_units},
                     {"window", features.window},
                     {"pca_dim", features.pca_dim}};
    j["cvae"] = {{"epochs", cvae.epochs},
                 {"batch_size", cvae.batch_size},
                 {"learning_rate", cvae.learning_rate},
                 {"n_v", cvae.n_v},
                 {"gamma1", cvae.gamma1},
                 {"gamma2", cvae.gamma2},
                 {"augmented_start", cvae.augmented_start},
                 {"score_every", cvae.score_every},
                 {"latent_dim", cvae.latent_dim},
                 {"hidden", cvae.hidden},
                 {"rom_subsample", rom_subsample}};
    j["inference"] = {{"epochs", inference.epochs},
                      {"batch_size", inference.batch_size},
                      {"learning_rate", inference.learning_rate},
                      {"folds", inference.folds},
                      {"eval_every", inference.eval_every}};
    j["prediction"] = {{"n_basis", n_basis}, {"n_param", n_param}, {"coverage_samples", coverage_samples}};
    return j;
}

void CampaignConfig::validate() const {
    if (n_train < 1 || n_test < 1) throw ConfigError("n_train and n_test must be >= 1");
    if (!(dt > 0.0) || !(T > 0.0)) throw ConfigError("dt and T must be positive");
    if (fom.n_dof < 2) throw ConfigError("fom.n_dof must be >= 2");
    space.validate();
    auto unit = [](double v, const char* what) {
        if (!(v > 0.0 && v < 1.0)) throw ConfigError(std::string(what) + " must lie in (0,1)");
    };
    unit(pod.epsilon, "pod.epsilon");
    unit(pod.global_epsilon, "pod.global_epsilon");
    unit(ecsw.tau, "ecsw.tau");
    if (pod.local_order < 0 || pod.global_order < 0) throw ConfigError("POD orders must be >= 0");
    if (pod.local_order > fom.n_dof || pod.global_order > fom.n_dof)
        throw ConfigError("POD orders cannot exceed n_dof");
    if (pod.global_order > 0 && pod.local_order > 0 && pod.global_order < pod.local_order)
        throw ConfigError("pod.global_order must be >= pod.local_order");
    if (ecsw.state_stride < 1 || ecsw.max_states < 1) throw ConfigError("ecsw sampling settings must be >= 1");
    if (twin.stiffness_cov < 0.0 || twin.noise_ratio < 0.0) throw ConfigError("twin settings must be >= 0");
    if (sensor_dofs.empty() && (sensor_count < 1 || sensor_count > fom.n_dof))
        throw ConfigError("sensors.count must lie in [1, n_dof]");
    if (features.pca_dim < 1) throw ConfigError("features.pca_dim must be >= 1");
    if (cvae.augmented_start < 0.0 || cvae.augmented_start > 1.0)
        throw ConfigError("cvae.augmented_start must lie in [0,1]");
    if (rom_subsample < 1) throw ConfigError("cvae.rom_subsample must be >= 1");
    if (n_basis < 0 || n_param < 0 || coverage_samples < 0) throw ConfigError("prediction sizes must be >= 0");
    if (threads < 0) throw ConfigError("threads must be >= 0");
    sensor_layout().validate(fom.n_dof);
}

std::uint64_t CampaignConfig::hash() const {
    const std::string s = to_json().dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

monitoring::SensorLayout CampaignConfig::sensor_layout() const {
    if (sensor_dofs.empty()) return monitoring::SensorLayout::evenly_spaced(fom.n_dof, sensor_count);
    monitoring::SensorLayout layout;
    layout.dofs = sensor_dofs;
    for (Index d : sensor_dofs) layout.names.push_back("dof" + std::to_string(d));
    return layout;
}

}  // namespace vprom::pipeline
