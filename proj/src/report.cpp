#include "vprom/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace vprom::pipeline {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

std::string trace_csv(const Trace& t) {
    std::ostringstream os;
    os << "# sample=" << t.sample << " dof=" << t.dof << "\n";
    os << "t,reference,mean,lower,upper\n";
    os << std::setprecision(17);
    for (Index k = 0; k < t.reference.size(); ++k)
        os << static_cast<double>(k) * t.dt << ',' << t.reference(k) << ',' << t.mean(k) << ',' << t.lower(k) << ','
           << t.upper(k) << '\n';
    return os.str();
}

Trace read_trace(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read " + path.string());
    Trace t;
    std::string line;
    std::getline(in, line);
    std::sscanf(line.c_str(), "# sample=%ld dof=%ld", &t.sample, &t.dof);
    std::getline(in, line);  // header
    std::vector<std::array<double, 5>> rows;
    while (std::getline(in, line)) {
        std::array<double, 5> r{};
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf", &r[0], &r[1], &r[2], &r[3], &r[4]) == 5) rows.push_back(r);
    }
    const Index n = static_cast<Index>(rows.size());
    t.reference.resize(n);
    t.mean.resize(n);
    t.lower.resize(n);
    t.upper.resize(n);
    for (Index k = 0; k < n; ++k) {
        const auto& r = rows[static_cast<std::size_t>(k)];
        t.reference(k) = r[1];
        t.mean(k) = r[2];
        t.lower(k) = r[3];
        t.upper(k) = r[4];
    }
    t.dt = n > 1 ? rows[1][0] - rows[0][0] : 1.0;
    return t;
}

}  // namespace

json EvaluationReport::metrics_json() const {
    json ladder_j = json::array();
    for (const auto& t : ladder)
        ladder_j.push_back({{"tier", t.name}, {"max_error_pct", t.max()}, {"mean_error_pct", t.mean()},
                            {"errors_pct", t.errors}});
    return {{"full_size", full_size},
            {"model_size", model_size},
            {"global_size", global_size},
            {"elements_total", elements_total},
            {"elements_selected", elements_selected},
            {"n_samples", n_samples},
            {"n_steps", n_steps},
            {"ladder", ladder_j},
            {"ladder_monotone", ladder_monotone},
            {"inference_coverage", inference_coverage},
            {"envelope_coverage", envelope_coverage},
            {"envelope_dof", envelope_dof},
            {"envelope_pass_fraction", envelope_pass_fraction}};
}

json EvaluationReport::timings_json() const {
    return {{"fom_seconds", fom_seconds},
            {"rom_seconds", rom_seconds},
            {"hrom_seconds", hrom_seconds},
            {"training_seconds", training_seconds},
            {"speedup", speedup()}};
}

std::string EvaluationReport::table_csv() const {
    std::ostringstream os;
    os << kTableHeader << '\n';
    const double rom_speedup = rom_seconds > 0.0 ? fom_seconds / rom_seconds : 0.0;
    os << "FOM," << full_size << ',' << full_size << ',' << elements_total << ",0,0,0," << num(fom_seconds) << ",1\n";
    if (!ladder.empty())
        os << "ROM," << model_size << ',' << full_size << ',' << elements_total << ',' << num(ladder.front().max())
           << ',' << num(ladder.front().mean()) << ",0," << num(rom_seconds) << ',' << num(rom_speedup) << '\n';
    if (!ladder.empty())
        os << "VpROM," << model_size << ',' << full_size << ',' << elements_selected << ','
           << num(ladder.back().max()) << ',' << num(ladder.back().mean()) << ',' << num(training_seconds) << ','
           << num(hrom_seconds) << ',' << num(speedup()) << '\n';
    return os.str();
}

std::string EvaluationReport::ladder_csv() const {
    std::ostringstream os;
    os << "tier,max_error_pct,mean_error_pct\n";
    for (const auto& t : ladder) os << t.name << ',' << num(t.max()) << ',' << num(t.mean()) << '\n';
    return os.str();
}

std::string EvaluationReport::coverage_csv() const {
    std::ostringstream os;
    os << "sample,dof,step_fraction_inside\n";
    for (std::size_t i = 0; i < envelope_coverage.size(); ++i)
        os << i << ',' << envelope_dof[i] << ',' << num(envelope_coverage[i]) << '\n';
    return os.str();
}

void write_report(const EvaluationReport& report, const fs::path& dir) {
    fs::create_directories(dir / "traces");
    write_text(dir / "metrics.json", report.metrics_json().dump(2) + "\n");
    write_text(dir / "timings.json", report.timings_json().dump(2) + "\n");
    write_text(dir / "table.csv", report.table_csv());
    write_text(dir / "ladder.csv", report.ladder_csv());
    write_text(dir / "coverage.csv", report.coverage_csv());
    for (const auto& t : report.traces) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%03ld.csv", t.sample);
        write_text(dir / "traces" / name, trace_csv(t));
    }
}

std::string svg_envelope_plot(const Trace& t, const std::string& title) {
    const double W = 720, H = 360, L = 70, R = 20, Tm = 40, B = 50;
    const Index n = t.reference.size();
    double lo = std::min({t.reference.minCoeff(), t.lower.minCoeff(), t.mean.minCoeff()});
    double hi = std::max({t.reference.maxCoeff(), t.upper.maxCoeff(), t.mean.maxCoeff()});
    if (!(hi > lo)) {
        lo -= 1.0;
        hi += 1.0;
    }
    const double t_end = n > 1 ? static_cast<double>(n - 1) * t.dt : 1.0;
    auto X = [&](Index k) { return L + (W - L - R) * (static_cast<double>(k) * t.dt) / t_end; };
    auto Y = [&](double v) { return Tm + (H - Tm - B) * (hi - v) / (hi - lo); };
    auto line = [&](const Vector& v) {
        std::ostringstream os;
        os << std::fixed << std::setprecision(2);
        for (Index k = 0; k < n; ++k) os << (k ? " " : "") << X(k) << ',' << Y(v(k));
        return os.str();
    };

    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
    // Envelope: upper forward, lower backward.
    os << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.6\" stroke=\"none\" points=\"";
    for (Index k = 0; k < n; ++k) os << X(k) << ',' << Y(t.upper(k)) << ' ';
    for (Index k = n - 1; k >= 0; --k) os << X(k) << ',' << Y(t.lower(k)) << ' ';
    os << "\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.2\" points=\"" << line(t.reference) << "\"/>\n";
    os << "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.2\" stroke-dasharray=\"5,3\" points=\""
       << line(t.mean) << "\"/>\n";
    // Axes with five ticks each.
    os << "<rect x=\"" << L << "\" y=\"" << Tm << "\" width=\"" << W - L - R << "\" height=\"" << H - Tm - B
       << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = lo + (hi - lo) * i / 4.0;
        const double tv = t_end * i / 4.0;
        const double xt = L + (W - L - R) * i / 4.0;
        os << "<text x=\"" << L - 6 << "\" y=\"" << Y(v) + 4 << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
        os << "<text x=\"" << xt << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << num(tv) << "</text>\n";
    }
    os << "<text x=\"" << (W + L - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">time [s]</text>\n";
    os << "<text x=\"16\" y=\"" << (H - B + Tm) / 2 << "\" transform=\"rotate(-90 16 " << (H - B + Tm) / 2
       << ")\" text-anchor=\"middle\">displacement, dof " << t.dof << "</text>\n";
    os << "<text x=\"" << W - R - 4 << "\" y=\"" << Tm + 16
       << "\" text-anchor=\"end\">black: FOM, red dashed: VpROM mean, band: 3 sigma</text>\n";
    os << "</svg>\n";
    return os.str();
}

std::vector<fs::path> render_plots(const fs::path& dir) {
    std::vector<fs::path> out;
    if (!fs::exists(dir / "traces")) return out;
    std::vector<fs::path> csvs;
    for (const auto& e : fs::directory_iterator(dir / "traces"))
        if (e.path().extension() == ".csv") csvs.push_back(e.path());
    std::sort(csvs.begin(), csvs.end());
    for (const auto& p : csvs) {
        const Trace t = read_trace(p);
        fs::path svg = p;
        svg.replace_extension(".svg");
        write_text(svg, svg_envelope_plot(t, "Test sample " + std::to_string(t.sample) + ", max-response dof"));
        out.push_back(svg);
    }
    return out;
}

}  // namespace vprom::pipeline
