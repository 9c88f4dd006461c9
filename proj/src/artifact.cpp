#include "vprom/matrix_io.hpp"
#include "vprom/pipeline.hpp"

#include <fstream>

namespace vprom::pipeline {

namespace fs = std::filesystem;

namespace {

json save_scaler(const monitoring::MinMaxScaler& s, const fs::path& dir, const std::string& prefix) {
    io::save_vector(dir / (prefix + "_lower.bin"), s.lower);
    io::save_vector(dir / (prefix + "_range.bin"), s.range);
    return {{"lower", prefix + "_lower.bin"}, {"range", prefix + "_range.bin"}};
}

monitoring::MinMaxScaler load_scaler(const json& j, const fs::path& dir) {
    monitoring::MinMaxScaler s;
    s.lower = io::load_vector(dir / j.at("lower").get<std::string>());
    s.range = io::load_vector(dir / j.at("range").get<std::string>());
    return s;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what());
    }
}

}  // namespace

void ModelArtifact::save(const fs::path& dir) const {
    // Written into a sibling directory first so a failure leaves nothing half-done.
    const fs::path tmp = dir.string() + ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    try {
        json m;
        m["version"] = kVersion;
        m["config"] = config.to_json();
        m["config_hash"] = hash_hex(config.hash());
        m["local_order"] = local_order;

        io::save_matrix(tmp / "global_modes.bin", global.modes);
        io::save_vector(tmp / "global_singular_values.bin", global.singular_values);
        io::save_matrix(tmp / "v0.bin", v0);
        m["global"] = {{"modes", "global_modes.bin"},
                       {"singular_values", "global_singular_values.bin"},
                       {"id", hash_hex(global.id())},
                       {"v0", "v0.bin"}};

        io::save_vector(tmp / "ecsw_weights.bin", weights.weights);
        m["ecsw"] = {{"element_ids", weights.element_ids},
                     {"weights", "ecsw_weights.bin"},
                     {"residual", weights.residual},
                     {"tolerance", weights.tolerance},
                     {"converged", weights.converged},
                     {"residual_history", weights.residual_history},
                     {"n_elements_total", weights.n_elements_total},
                     {"basis_hash", hash_hex(weights.basis_hash)}};

        const auto& pca = features.pca();
        io::save_vector(tmp / "pca_mean.bin", pca.mean);
        io::save_matrix(tmp / "pca_components.bin", pca.components);
        io::save_vector(tmp / "pca_variances.bin", pca.variances);
        m["features"] = {{"sensor_dofs", features.layout().dofs},
                         {"sensor_names", features.layout().names},
                         {"scaler", save_scaler(features.scaler(), tmp, "feature_scaler")},
                         {"pca",
                          {{"mean", "pca_mean.bin"},
                           {"components", "pca_components.bin"},
                           {"variances", "pca_variances.bin"}}}};

        m["cvae"] = {{"encoder", cvae.encoder.save(tmp, "cvae_encoder")},
                     {"decoder", cvae.decoder.save(tmp, "cvae_decoder")},
                     {"latent_dim", cvae.latent_dim},
                     {"cond_dim", cvae.cond_dim},
                     {"obs_rows", cvae.obs_rows},
                     {"obs_cols", cvae.obs_cols},
                     {"x_scaler", save_scaler(cvae.x_scaler, tmp, "cvae_x_scaler")}};

        io::save_vector(tmp / "inference_lower.bin", inference.lower());
        io::save_vector(tmp / "inference_range.bin", inference.range());
        io::save_vector(tmp / "inference_clamp_lower.bin", inference.clamp_lower());
        io::save_vector(tmp / "inference_clamp_upper.bin", inference.clamp_upper());
        m["inference"] = {{"shared", inference.shared().save(tmp, "inference_shared")},
                          {"mean", inference.mean_head().save(tmp, "inference_mean")},
                          {"std", inference.std_head().save(tmp, "inference_std")},
                          {"lower", "inference_lower.bin"},
                          {"range", "inference_range.bin"},
                          {"clamp_lower", "inference_clamp_lower.bin"},
                          {"clamp_upper", "inference_clamp_upper.bin"}};

        write_json(tmp / "manifest.json", m);
        write_json(tmp / "training_report.json", training_report);
        fs::remove_all(dir);
        fs::rename(tmp, dir);
    } catch (...) {
        fs::remove_all(tmp);
        throw;
    }
}

ModelArtifact ModelArtifact::load(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw ConfigError("artifact not found: " + dir.string());
    const json m = read_json(dir / "manifest.json");
    ModelArtifact a;
    try {
        if (m.at("version").get<int>() != kVersion)
            throw ConfigError("artifact version " + std::to_string(m.at("version").get<int>()) + " is not supported");
        a.config = CampaignConfig::from_json(m.at("config"));
        if (hash_hex(a.config.hash()) != m.at("config_hash").get<std::string>())
            throw ConfigError("artifact config hash does not match its config");
        a.system = std::make_shared<const dynamics::FOMSystem>(dynamics::assemble_fom(a.config.fom));
        a.local_order = m.at("local_order").get<Index>();

        const json& g = m.at("global");
        a.global.modes = io::load_matrix(dir / g.at("modes").get<std::string>());
        a.global.singular_values = io::load_vector(dir / g.at("singular_values").get<std::string>());
        a.v0 = io::load_matrix(dir / g.at("v0").get<std::string>());
        if (hash_hex(a.global.id()) != g.at("id").get<std::string>())
            throw ConfigError("global basis does not match its recorded id");

        const json& e = m.at("ecsw");
        a.weights.element_ids = e.at("element_ids").get<std::vector<Index>>();
        a.weights.weights = io::load_vector(dir / e.at("weights").get<std::string>());
        a.weights.residual = e.at("residual").get<double>();
        a.weights.tolerance = e.at("tolerance").get<double>();
        a.weights.converged = e.at("converged").get<bool>();
        a.weights.residual_history = e.at("residual_history").get<std::vector<double>>();
        a.weights.n_elements_total = e.at("n_elements_total").get<Index>();
        a.weights.basis_hash = std::stoull(e.at("basis_hash").get<std::string>(), nullptr, 16);
        if (a.weights.basis_hash != a.global.id()) throw ConfigError("ECSW weights belong to a different basis");

        const json& f = m.at("features");
        monitoring::SensorLayout layout;
        layout.dofs = f.at("sensor_dofs").get<std::vector<Index>>();
        layout.names = f.at("sensor_names").get<std::vector<std::string>>();
        a.features = monitoring::FeatureExtractor(a.config.features, layout);
        monitoring::PCAProjector pca;
        const json& jp = f.at("pca");
        pca.mean = io::load_vector(dir / jp.at("mean").get<std::string>());
        pca.components = io::load_matrix(dir / jp.at("components").get<std::string>());
        pca.variances = io::load_vector(dir / jp.at("variances").get<std::string>());
        a.features.set_state(load_scaler(f.at("scaler"), dir), std::move(pca));

        const json& c = m.at("cvae");
        a.cvae.encoder = neural::DenseNetwork::load(c.at("encoder"), dir);
        a.cvae.decoder = neural::DenseNetwork::load(c.at("decoder"), dir);
        a.cvae.latent_dim = c.at("latent_dim").get<Index>();
        a.cvae.cond_dim = c.at("cond_dim").get<Index>();
        a.cvae.obs_rows = c.at("obs_rows").get<Index>();
        a.cvae.obs_cols = c.at("obs_cols").get<Index>();
        a.cvae.x_scaler = load_scaler(c.at("x_scaler"), dir);

        const json& i = m.at("inference");
        a.inference.set_networks(neural::DenseNetwork::load(i.at("shared"), dir),
                                 neural::DenseNetwork::load(i.at("mean"), dir),
                                 neural::DenseNetwork::load(i.at("std"), dir));
        a.inference.set_scaling(io::load_vector(dir / i.at("lower").get<std::string>()),
                                io::load_vector(dir / i.at("range").get<std::string>()),
                                io::load_vector(dir / i.at("clamp_lower").get<std::string>()),
                                io::load_vector(dir / i.at("clamp_upper").get<std::string>()));
    } catch (const json::exception& ex) {
        throw ConfigError("artifact manifest is malformed: " + std::string(ex.what()));
    }
    if (fs::exists(dir / "training_report.json")) a.training_report = read_json(dir / "training_report.json");
    return a;
}

}  // namespace vprom::pipeline
