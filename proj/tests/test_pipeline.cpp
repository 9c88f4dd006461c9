#include <doctest.h>

#include "vprom/parallel.hpp"
#include "vprom/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace vprom;
using namespace vprom::pipeline;
namespace fs = std::filesystem;

namespace {

json toy_json() {
    std::ifstream in(fs::path(VPROM_SOURCE_DIR) / "configs" / "toy.json");
    REQUIRE(in);
    json j;
    in >> j;
    // Smaller than the shipped toy so the suite stays quick.
    j["n_train"] = 16;
    j["n_test"] = 4;
    j["T"] = 5.0;
    j["cvae"]["epochs"] = 20;
    j["inference"]["epochs"] = 30;
    j["prediction"] = {{"n_basis", 6}, {"n_param", 4}, {"coverage_samples", 2}};
    return j;
}

const ModelArtifact& toy_artifact() {
    static const ModelArtifact art = train_offline(CampaignConfig::from_json(toy_json()));
    return art;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("vprom_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("campaign config round-trips and validates") {
    const auto cfg = CampaignConfig::from_json(toy_json());
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.fom.n_dof == 20);
    CHECK(cfg.space.size() == 4);
    CHECK(cfg.space.marginals[0].kind == dynamics::Marginal::Kind::Normal);
    const auto again = CampaignConfig::from_json(cfg.to_json());
    CHECK(again.to_json() == cfg.to_json());
    CHECK(again.hash() == cfg.hash());
    CHECK(again.cvae.seed == cfg.cvae.seed);

    json j = toy_json();
    j["seed"] = 2;
    CHECK(CampaignConfig::from_json(j).hash() != cfg.hash());
    CHECK(CampaignConfig::from_json(j).cvae.seed != cfg.cvae.seed);

    json typo = toy_json();
    typo["pod"]["epsilom"] = 1e-5;
    CHECK_THROWS_AS(CampaignConfig::from_json(typo), ConfigError);
    json bad_eps = toy_json();
    bad_eps["pod"]["epsilon"] = 1.5;
    CHECK_THROWS_AS(CampaignConfig::from_json(bad_eps).validate(), ConfigError);
    json zero = toy_json();
    zero["n_train"] = 0;
    CHECK_THROWS_AS(CampaignConfig::from_json(zero).validate(), ConfigError);
    json wrong_type = toy_json();
    wrong_type["dt"] = "fast";
    CHECK_THROWS_AS(CampaignConfig::from_json(wrong_type), ConfigError);
    json normal_default = toy_json();
    normal_default["parameters"][0].erase("lower");
    normal_default["parameters"][0].erase("upper");
    CHECK(CampaignConfig::from_json(normal_default).space.marginals[0].lower == doctest::Approx(0.7));
    CHECK_THROWS_AS(CampaignConfig::load("/nonexistent/config.json"), ConfigError);

    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}

TEST_CASE("parallel_for is independent of the worker count") {
    std::vector<double> a(100), b(100);
    set_thread_count(1);
    parallel_for(100, [&](Index i) { a[static_cast<std::size_t>(i)] = std::sin(static_cast<double>(i)); });
    set_thread_count(4);
    parallel_for(100, [&](Index i) { b[static_cast<std::size_t>(i)] = std::sin(static_cast<double>(i)); });
    CHECK(a == b);

    std::atomic<int> ran{0};
    try {
        parallel_for(50, [&](Index i) {
            ++ran;
            if (i == 7 || i == 31) throw ConfigError("task " + std::to_string(i));
        });
        FAIL("expected an exception");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()) == "task 7");
    }
    CHECK(ran == 50);
    set_thread_count(0);
}

TEST_CASE("train_offline produces a consistent artifact") {
    const auto& art = toy_artifact();
    CHECK(art.local_order >= 1);
    CHECK(art.global.order() >= art.local_order);
    CHECK(art.v0 == art.global.modes.leftCols(art.local_order));
    CHECK(art.cvae.obs_rows == art.global.order());
    CHECK(art.cvae.obs_cols == art.local_order);
    CHECK(art.cvae.cond_dim == art.features.output_dim());
    CHECK(art.inference.input_dim() == art.features.output_dim());
    CHECK(art.inference.output_dim() == art.config.space.size());
    CHECK(art.weights.basis_hash == art.global.id());
    CHECK(art.weights.size() >= 1);
    CHECK((art.weights.weights.array() > 0.0).all());
    CHECK(art.weights.residual <= art.config.ecsw.tau);
    CHECK(art.training_report.at("cvae").at("loss").size() == 20);
    CHECK(art.training_report.at("timings").contains("ecsw"));
}

TEST_CASE("artifact save/load is bit-identical") {
    const auto& art = toy_artifact();
    const fs::path dir = scratch("artifact");
    art.save(dir);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "training_report.json"));
    CHECK_FALSE(fs::exists(dir.string() + ".partial"));
    const auto back = ModelArtifact::load(dir);
    CHECK(back.global.modes == art.global.modes);
    CHECK(back.v0 == art.v0);
    CHECK(back.cvae.parameters() == art.cvae.parameters());
    CHECK(back.inference.parameters() == art.inference.parameters());
    CHECK(back.weights.weights == art.weights.weights);
    CHECK(back.weights.element_ids == art.weights.element_ids);
    CHECK(back.config.hash() == art.config.hash());

    const Vector w = Vector::Constant(art.cvae.cond_dim, 0.3);
    const EnsembleSizes sizes{5, 3};
    const auto p1 = predict_online(art, w, sizes, 11);
    const auto p2 = predict_online(back, w, sizes, 11);
    CHECK(p1.mean == p2.mean);
    CHECK(p1.lower == p2.lower);
    CHECK(p1.upper == p2.upper);

    // Saving again over an existing artifact replaces it.
    back.save(dir);
    CHECK(ModelArtifact::load(dir).cvae.parameters() == art.cvae.parameters());

    try {
        ModelArtifact::load(scratch("missing"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("artifact not found") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("predict_online envelopes") {
    const auto& art = toy_artifact();
    const Vector w = Vector::Constant(art.cvae.cond_dim, 0.5);

    const auto single = predict_online(art, w, {1, 1}, 3);
    CHECK(single.ensemble_size == 1);
    CHECK(single.lower == single.mean);
    CHECK(single.upper == single.mean);

    const auto none = predict_online(art, w, {0, 0}, 3);
    CHECK(none.ensemble_size == 0);
    CHECK(none.lower == none.mean);

    const auto b = predict_online(art, w, {8, 3}, 4);
    CHECK(b.ensemble_size == 8);
    CHECK(b.failures == 0);
    CHECK((b.lower.array() <= b.mean.array()).all());
    CHECK((b.mean.array() <= b.upper.array()).all());
    CHECK((b.upper - b.lower).maxCoeff() > 0.0);
    CHECK(b.param_mu.size() == art.config.space.size());
    CHECK((b.param_sigma.array() > 0.0).all());
    CHECK(predict_online(art, w, {8, 3}, 4).upper == b.upper);

    CHECK_THROWS_AS(predict_online(art, Vector::Zero(art.cvae.cond_dim + 1), {1, 1}, 0), DimensionError);
    CHECK_THROWS_AS(predict_from_signals(art, Matrix::Zero(1, 10), {1, 1}, 0), DimensionError);
}

TEST_CASE("evaluate reports the four-tier ladder deterministically") {
    const auto& art = toy_artifact();
    const auto rep = evaluate(art);
    REQUIRE(rep.ladder.size() == 4);
    CHECK(rep.ladder[0].name == "Truncation");
    CHECK(rep.ladder[1].name == "Hyper-reduction");
    CHECK(rep.ladder[2].name == "cVAE basis interp.");
    CHECK(rep.ladder[3].name == "Parameter inference");
    for (const auto& t : rep.ladder) {
        CHECK(t.errors.size() == 4);
        CHECK(t.max() >= t.mean());
    }
    CHECK(rep.envelope_coverage.size() == 2);
    CHECK(rep.traces.size() == 2);
    CHECK(rep.inference_coverage >= 0.0);
    CHECK(rep.inference_coverage <= 1.0);

    std::istringstream table(rep.table_csv());
    std::string line;
    std::getline(table, line);
    CHECK(line == kTableHeader);
    int rows = 0;
    while (std::getline(table, line)) {
        CHECK(std::count(line.begin(), line.end(), ',') == 8);
        ++rows;
    }
    CHECK(rows == 3);

    const auto again = evaluate(art);
    CHECK(again.metrics_json().dump() == rep.metrics_json().dump());
    CHECK(again.ladder_csv() == rep.ladder_csv());

    const fs::path dir = scratch("report");
    write_report(rep, dir);
    for (const char* f : {"metrics.json", "timings.json", "table.csv", "ladder.csv", "coverage.csv"})
        CHECK(fs::exists(dir / f));
    const auto plots = render_plots(dir);
    CHECK(plots.size() == 2);
    CHECK(slurp(plots.front()).find("<svg") == 0);
    CHECK(slurp(plots.front()).find("<polygon") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("evaluate on training samples reuses the training measurements") {
    const auto& art = toy_artifact();
    EvaluationOptions opt;
    opt.training_samples = true;
    opt.n_samples = 3;
    opt.coverage_samples = 0;
    const auto rep = evaluate(art, opt);
    CHECK(rep.n_samples == 3);
    CHECK(rep.envelope_coverage.empty());
    // True local bases with full assembly: the truncation tier is small.
    CHECK(rep.ladder[0].max() < 2.0);
    opt.n_samples = art.config.n_train + 1;
    CHECK_THROWS_AS(evaluate(art, opt), ConfigError);
}
