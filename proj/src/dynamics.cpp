#include "vprom/dynamics.hpp"

#include "vprom/newmark.hpp"

#include <boost/math/distributions/normal.hpp>

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace vprom::dynamics {

// ============================================================================
// Parameters
// ============================================================================

double ParameterVector::get(const std::string& name, double fallback) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return values(static_cast<Index>(i));
    }
    return fallback;
}

std::vector<std::string> ParameterSpace::names() const {
    std::vector<std::string> out;
    out.reserve(marginals.size());
    for (const auto& m : marginals) out.push_back(m.name);
    return out;
}

Vector ParameterSpace::lower_bounds() const {
    Vector lo(size());
    for (Index i = 0; i < size(); ++i) lo(i) = marginals[static_cast<std::size_t>(i)].lower;
    return lo;
}

Vector ParameterSpace::upper_bounds() const {
    Vector hi(size());
    for (Index i = 0; i < size(); ++i) hi(i) = marginals[static_cast<std::size_t>(i)].upper;
    return hi;
}

void ParameterSpace::validate() const {
    if (marginals.empty()) throw ConfigError("parameter space has no marginals");
    for (const auto& m : marginals) {
        if (m.kind == Marginal::Kind::Normal && !(m.std > 0.0))
            throw ConfigError("normal marginal '" + m.name + "' needs std > 0");
        if (!(m.lower < m.upper)) throw ConfigError("marginal '" + m.name + "' needs lower < upper");
        if (m.kind == Marginal::Kind::Normal && (m.mean < m.lower || m.mean > m.upper))
            throw ConfigError("normal marginal '" + m.name + "' has its mean outside the bounds");
    }
}

ParameterVector ParameterSpace::make(const Vector& values) const {
    require_dims(values.size() == size(), "parameter vector length does not match the space");
    if (!values.allFinite()) throw ConfigError("parameter values must be finite");
    return ParameterVector{names(), values};
}

std::vector<ParameterVector> sample_parameters_lhs(const ParameterSpace& space, Index n, std::uint64_t seed) {
    space.validate();
    if (n < 1) throw ConfigError("LHS needs at least one sample");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Index k = space.size();
    Matrix design(k, n);
    std::vector<Index> strata(static_cast<std::size_t>(n));

    for (Index d = 0; d < k; ++d) {
        const auto& m = space.marginals[static_cast<std::size_t>(d)];
        std::iota(strata.begin(), strata.end(), Index{0});
        std::shuffle(strata.begin(), strata.end(), rng);

        boost::math::normal_distribution<double> std_normal(0.0, 1.0);
        double p_lo = 0.0, p_hi = 1.0;
        if (m.kind == Marginal::Kind::Normal) {
            p_lo = boost::math::cdf(std_normal, (m.lower - m.mean) / m.std);
            p_hi = boost::math::cdf(std_normal, (m.upper - m.mean) / m.std);
        }
        for (Index i = 0; i < n; ++i) {
            const double u = (static_cast<double>(strata[static_cast<std::size_t>(i)]) + unit(rng)) /
                             static_cast<double>(n);
            double value;
            if (m.kind == Marginal::Kind::Uniform) {
                value = m.lower + u * (m.upper - m.lower);
            } else {
                const double q = std::clamp(p_lo + u * (p_hi - p_lo), 1e-300, 1.0 - 1e-16);
                value = m.mean + m.std * boost::math::quantile(std_normal, q);
            }
            design(d, i) = std::clamp(value, m.lower, m.upper);
        }
    }

    std::vector<ParameterVector> out;
    out.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) out.push_back(space.make(design.col(i)));
    return out;
}

// ============================================================================
// Full-order model
// ============================================================================

double Excitation::signal(double t) const {
    switch (kind) {
        case Kind::None: return 0.0;
        case Kind::Step: return 1.0;
        case Kind::MultiSine: {
            const double weight = std::sqrt(2.0 / static_cast<double>(frequencies.size()));
            double s = 0.0;
            for (std::size_t c = 0; c < frequencies.size(); ++c)
                s += std::sin(2.0 * std::numbers::pi * frequencies[c] * t + phases[c]);
            return weight * s;
        }
    }
    return 0.0;
}

Vector FOMSystem::load(double t, const ParameterVector& p) const {
    if (excitation.kind == Excitation::Kind::None) return Vector::Zero(n_dof);
    const double amplitude = p.get(param::kAmplitude, 1.0);
    const double direction = p.get(param::kDirection, 0.0);
    const double s = amplitude * excitation.signal(t);
    return s * (std::cos(direction) * excitation.load_a + std::sin(direction) * excitation.load_b);
}

std::vector<ElementLaw> element_laws(const FOMSystem& system, const ParameterVector& p) {
    const double ks = p.get(param::kStiffnessScale, 1.0);
    const double cs = p.get(param::kCubicScale, 1.0);
    std::vector<ElementLaw> laws;
    laws.reserve(system.elements.size());
    for (const auto& e : system.elements) laws.push_back({ks * e.k_lin, cs * e.k_cub});
    return laws;
}

namespace {

void scatter_stiffness(std::vector<Eigen::Triplet<double>>& trip, const Element& e, double k) {
    trip.emplace_back(e.a, e.a, k);
    if (e.b != Element::kGround) {
        trip.emplace_back(e.b, e.b, k);
        trip.emplace_back(e.a, e.b, -k);
        trip.emplace_back(e.b, e.a, -k);
    }
}

}  // namespace

SparseMatrix FOMSystem::linear_stiffness(const ParameterVector& p) const {
    const auto laws = element_laws(*this, p);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(elements.size() * 4);
    for (std::size_t i = 0; i < elements.size(); ++i) scatter_stiffness(trip, elements[i], laws[i].k_lin);
    SparseMatrix k(n_dof, n_dof);
    k.setFromTriplets(trip.begin(), trip.end());
    return k;
}

FOMSystem assemble_fom(const FOMConfig& config) {
    if (config.n_dof < 1) throw ConfigError("n_dof must be >= 1");
    if (!(config.mass > 0.0)) throw ConfigError("mass must be positive");
    if (config.k_lin < 0.0 || config.k_cub < 0.0) throw ConfigError("spring coefficients must be non-negative");
    if (config.alpha_m < 0.0 || config.alpha_k < 0.0) throw ConfigError("damping coefficients must be non-negative");

    const Index n = config.n_dof;
    FOMSystem sys;
    sys.n_dof = n;
    sys.mass.resize(n, n);
    sys.mass.setIdentity();
    sys.mass *= config.mass;
    sys.alpha_m = config.alpha_m;
    sys.alpha_k = config.alpha_k;

    const double gk = config.ground_k_lin < 0.0 ? config.k_lin : config.ground_k_lin;
    const double gc = config.ground_k_cub < 0.0 ? config.k_cub : config.ground_k_cub;
    auto ground = [&](Index i) { sys.elements.push_back({i, Element::kGround, gk, gc}); };
    auto couple = [&](Index i) { sys.elements.push_back({i, i + 1, config.k_lin, config.k_cub}); };

    switch (config.ground) {
        case FOMConfig::Ground::All:
            for (Index i = 0; i < n; ++i) ground(i);
            for (Index i = 0; i + 1 < n; ++i) couple(i);
            break;
        case FOMConfig::Ground::First:
            ground(0);
            for (Index i = 0; i + 1 < n; ++i) couple(i);
            break;
        case FOMConfig::Ground::Ends:
            ground(0);
            for (Index i = 0; i + 1 < n; ++i) couple(i);
            if (n > 1) ground(n - 1);
            break;
    }
    if (sys.elements.empty()) throw ConfigError("configuration produces no elements");

    auto& ex = sys.excitation;
    ex.kind = config.excitation;
    ex.load_a = Vector::Zero(n);
    ex.load_b = Vector::Zero(n);
    auto fill = [n](Vector& target, const std::vector<Index>& dofs, Index fallback) {
        if (dofs.empty()) {
            target(fallback) = 1.0;
            return;
        }
        for (Index d : dofs) {
            if (d < 0 || d >= n) throw ConfigError("load dof out of range");
            target(d) = 1.0;
        }
    };
    fill(ex.load_a, config.load_dofs_a, n - 1);
    fill(ex.load_b, config.load_dofs_b, n / 2);

    if (ex.kind == Excitation::Kind::MultiSine) {
        if (config.n_components < 1) throw ConfigError("multi-sine needs at least one component");
        if (!(config.f_min > 0.0) || config.f_max < config.f_min)
            throw ConfigError("multi-sine band must satisfy 0 < f_min <= f_max");
        ex.n_components = config.n_components;
        ex.f_min = config.f_min;
        ex.f_max = config.f_max;
        ex.phase_seed = config.phase_seed;
        std::mt19937_64 rng(config.phase_seed);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        for (Index c = 0; c < config.n_components; ++c) {
            const double frac = config.n_components == 1
                                    ? 0.0
                                    : static_cast<double>(c) / static_cast<double>(config.n_components - 1);
            ex.frequencies.push_back(config.f_min + frac * (config.f_max - config.f_min));
            ex.phases.push_back(phase(rng));
        }
    }
    return sys;
}

RestoringForce evaluate_restoring(const FOMSystem& system, const Vector& u, const Vector& v,
                                  const ParameterVector& p) {
    require_dims(u.size() == system.n_dof && v.size() == system.n_dof, "state size does not match n_dof");
    const auto laws = element_laws(system, p);
    RestoringForce out;
    out.g = Vector::Zero(system.n_dof);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(system.elements.size() * 4);
    for (std::size_t i = 0; i < system.elements.size(); ++i) {
        const auto& e = system.elements[i];
        const double d = elongation(e, u);
        const double f = spring_force(laws[i], d);
        out.g(e.a) += f;
        if (e.b != Element::kGround) out.g(e.b) -= f;
        scatter_stiffness(trip, e, spring_tangent(laws[i], d));
    }
    out.K_t.resize(system.n_dof, system.n_dof);
    out.K_t.setFromTriplets(trip.begin(), trip.end());
    const SparseMatrix damping = system.alpha_m * system.mass + system.alpha_k * system.linear_stiffness(p);
    out.g += damping * v;
    return out;
}

// ============================================================================
// Time integration
// ============================================================================

namespace {

/// Sparse Newmark model of the chain. The effective-matrix pattern is fixed,
/// so element tangents are scattered straight into the compressed value array.
class FomModel {
public:
    FomModel(const FOMSystem& system, const ParameterVector& p)
        : system_(system), p_(p), laws_(element_laws(system, p)) {
        const Index n = system.n_dof;
        damping_ = system.alpha_m * system.mass + system.alpha_k * system.linear_stiffness(p);

        std::vector<Eigen::Triplet<double>> trip;
        for (Index i = 0; i < n; ++i) trip.emplace_back(i, i, 0.0);
        for (const auto& e : system.elements) scatter_stiffness(trip, e, 0.0);
        for (int k = 0; k < system.mass.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(system.mass, k); it; ++it) trip.emplace_back(it.row(), it.col(), 0.0);
        for (int k = 0; k < damping_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(damping_, k); it; ++it) trip.emplace_back(it.row(), it.col(), 0.0);
        effective_.resize(n, n);
        effective_.setFromTriplets(trip.begin(), trip.end());
        effective_.makeCompressed();

        auto slot = [this](Index r, Index c) { return &effective_.coeffRef(r, c) - effective_.valuePtr(); };
        mass_values_ = Vector::Zero(effective_.nonZeros());
        damping_values_ = Vector::Zero(effective_.nonZeros());
        for (int k = 0; k < system.mass.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(system.mass, k); it; ++it)
                mass_values_(slot(it.row(), it.col())) += it.value();
        for (int k = 0; k < damping_.outerSize(); ++k)
            for (SparseMatrix::InnerIterator it(damping_, k); it; ++it)
                damping_values_(slot(it.row(), it.col())) += it.value();
        slots_.reserve(system.elements.size());
        for (const auto& e : system.elements) {
            if (e.b == Element::kGround) {
                slots_.push_back({slot(e.a, e.a), -1, -1, -1});
            } else {
                slots_.push_back({slot(e.a, e.a), slot(e.b, e.b), slot(e.a, e.b), slot(e.b, e.a)});
            }
        }
        tangent_.resize(static_cast<Index>(system.elements.size()));
        f_int_ = Vector::Zero(n);
        solver_.analyzePattern(effective_);
    }

    Index size() const { return system_.n_dof; }
    Vector load(double t) const { return system_.load(t, p_); }
    Vector mass_times(const Vector& a) const { return system_.mass * a; }
    Vector damping_times(const Vector& v) const { return damping_ * v; }
    const Vector& internal_force() const { return f_int_; }

    void update(const Vector& u) {
        f_int_.setZero();
        for (std::size_t i = 0; i < system_.elements.size(); ++i) {
            const auto& e = system_.elements[i];
            const double d = elongation(e, u);
            const double f = spring_force(laws_[i], d);
            f_int_(e.a) += f;
            if (e.b != Element::kGround) f_int_(e.b) -= f;
            tangent_(static_cast<Index>(i)) = spring_tangent(laws_[i], d);
        }
    }

    Vector solve(double c_mass, double c_damp, const Vector& rhs) {
        Eigen::Map<Vector> values(effective_.valuePtr(), effective_.nonZeros());
        values = c_mass * mass_values_ + c_damp * damping_values_;
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            const double k = tangent_(static_cast<Index>(i));
            const auto& s = slots_[i];
            values(s[0]) += k;
            if (s[1] >= 0) {
                values(s[1]) += k;
                values(s[2]) -= k;
                values(s[3]) -= k;
            }
        }
        return factor_and_solve(rhs);
    }

    Vector solve_mass(const Vector& rhs) {
        Eigen::Map<Vector> values(effective_.valuePtr(), effective_.nonZeros());
        values = mass_values_;
        return factor_and_solve(rhs);
    }

private:
    Vector factor_and_solve(const Vector& rhs) {
        solver_.factorize(effective_);
        if (solver_.info() != Eigen::Success) throw NumericError("effective stiffness factorization failed");
        return solver_.solve(rhs);
    }

    const FOMSystem& system_;
    ParameterVector p_;
    std::vector<ElementLaw> laws_;
    SparseMatrix damping_;
    SparseMatrix effective_;
    Vector mass_values_;
    Vector damping_values_;
    std::vector<std::array<Index, 4>> slots_;
    Vector tangent_;
    Vector f_int_;
    Eigen::SimplicialLDLT<SparseMatrix> solver_;
};

}  // namespace

Index step_count(double dt, double T) {
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (T < dt) throw ConfigError("T must be >= dt");
    return static_cast<Index>(std::llround(T / dt));
}

TimeHistory integrate_newmark(const FOMSystem& system, const ParameterVector& p, double dt, double T,
                              const Vector& u0, const Vector& v0, const NewmarkOptions& options) {
    const Index n_steps = step_count(dt, T);
    FomModel model(system, p);
    return newmark_integrate(model, dt, n_steps, u0, v0, options);
}

FOMSystem make_perturbed_twin(const FOMSystem& system, const ParameterVector& p, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw ConfigError("perturbation std must be non-negative");
    FOMSystem twin = system;
    if (sigma == 0.0) return twin;
    const double ks = p.get(param::kStiffnessScale, 1.0);
    if (!(ks > 0.0)) throw ConfigError("stiffness scale must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (auto& e : twin.elements) {
        const double nominal = ks * e.k_lin;
        const double draw = std::max(nominal + sigma * noise(rng), 1e-6 * nominal);
        // Stored unscaled so that element_laws() reproduces the draw.
        e.k_lin = draw / ks;
    }
    return twin;
}

}  // namespace vprom::dynamics
