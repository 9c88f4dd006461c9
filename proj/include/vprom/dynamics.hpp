#pragma once

// Parametric nonlinear full-order model: a chain of lumped masses connected
// by linear + cubic springs,
//
//     M u'' + C u' + f_int(u; p) = F(t; p),   C = alpha_M M + alpha_K K_lin(p)
//
// plus its perturbed measurement twin and parameter-space sampling.

#include "vprom/common.hpp"

#include <Eigen/Sparse>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vprom::dynamics {

using SparseMatrix = Eigen::SparseMatrix<double>;

// ============================================================================
// Parameters
// ============================================================================

/// Well-known parameter names understood by the chain model. Parameters that
/// are absent from a ParameterVector take their neutral value.
namespace param {
inline constexpr const char* kStiffnessScale = "stiffness_scale";  // default 1
inline constexpr const char* kCubicScale = "cubic_scale";          // default 1
inline constexpr const char* kAmplitude = "amplitude";             // default 1
inline constexpr const char* kDirection = "direction";             // default 0 [rad]
}  // namespace param

struct ParameterVector {
    std::vector<std::string> names;
    Vector values;

    Index size() const { return values.size(); }
    /// Value of `name`, or `fallback` when the parameter is not declared.
    double get(const std::string& name, double fallback) const;
};

struct Marginal {
    enum class Kind { Normal, Uniform };
    std::string name;
    Kind kind = Kind::Uniform;
    double mean = 0.0;
    double std = 1.0;
    // Truncation bounds. For Normal marginals they default to mean +- 3 std.
    double lower = 0.0;
    double upper = 1.0;
};

struct ParameterSpace {
    std::vector<Marginal> marginals;

    Index size() const { return static_cast<Index>(marginals.size()); }
    std::vector<std::string> names() const;
    Vector lower_bounds() const;
    Vector upper_bounds() const;
    /// Throws ConfigError on degenerate marginals.
    void validate() const;
    ParameterVector make(const Vector& values) const;
};

/// Latin hypercube design: for every marginal each of the N equiprobable
/// strata holds exactly one sample. Normal marginals are realized through the
/// inverse CDF of the truncated normal.
std::vector<ParameterVector> sample_parameters_lhs(const ParameterSpace& space, Index n,
                                                   std::uint64_t seed);

// ============================================================================
// Full-order model
// ============================================================================

/// Spring between dof `a` and dof `b`; `b == kGround` ties `a` to ground.
struct Element {
    static constexpr Index kGround = -1;
    Index a = 0;
    Index b = kGround;
    double k_lin = 1.0;
    double k_cub = 0.0;
};

struct Excitation {
    enum class Kind { None, Step, MultiSine };
    Kind kind = Kind::None;
    // Multi-sine: unit-RMS sum of equally spaced components with seeded phases.
    Index n_components = 0;
    double f_min = 0.0;  // [Hz]
    double f_max = 0.0;  // [Hz]
    std::uint64_t phase_seed = 0;
    std::vector<double> frequencies;
    std::vector<double> phases;
    // Spatial distribution: cos(direction) * load_a + sin(direction) * load_b.
    Vector load_a;
    Vector load_b;

    double signal(double t) const;
};

struct FOMConfig {
    Index n_dof = 0;
    double mass = 1.0;
    double k_lin = 1.0;         // per element
    double k_cub = 0.0;         // per element
    double ground_k_lin = -1.0; // <0: same as k_lin
    double ground_k_cub = -1.0; // <0: same as k_cub
    enum class Ground { Ends, First, All } ground = Ground::Ends;
    double alpha_m = 0.0;
    double alpha_k = 0.0;
    Excitation::Kind excitation = Excitation::Kind::None;
    Index n_components = 0;
    double f_min = 0.0;
    double f_max = 0.0;
    std::uint64_t phase_seed = 0;
    std::vector<Index> load_dofs_a;  // empty: last dof
    std::vector<Index> load_dofs_b;  // empty: middle dof
};

struct FOMSystem {
    Index n_dof = 0;
    SparseMatrix mass;
    double alpha_m = 0.0;
    double alpha_k = 0.0;
    std::vector<Element> elements;
    Excitation excitation;

    Index n_elements() const { return static_cast<Index>(elements.size()); }
    /// External load F(t; p).
    Vector load(double t, const ParameterVector& p) const;
    /// Linear stiffness K_lin(p) (cubic terms excluded).
    SparseMatrix linear_stiffness(const ParameterVector& p) const;
};

FOMSystem assemble_fom(const FOMConfig& config);

/// Scaled per-element coefficients for a parameter realization.
struct ElementLaw {
    double k_lin;
    double k_cub;
};
std::vector<ElementLaw> element_laws(const FOMSystem& system, const ParameterVector& p);

/// Axial force of one spring at elongation `d` and its derivative.
inline double spring_force(const ElementLaw& law, double d) { return law.k_lin * d + law.k_cub * d * d * d; }
inline double spring_tangent(const ElementLaw& law, double d) { return law.k_lin + 3.0 * law.k_cub * d * d; }

inline double elongation(const Element& e, const Vector& u) {
    return e.b == Element::kGround ? u(e.a) : u(e.a) - u(e.b);
}

struct RestoringForce {
    Vector g;            // f_int(u) + C u'
    SparseMatrix K_t;    // dg/du
};

RestoringForce evaluate_restoring(const FOMSystem& system, const Vector& u, const Vector& v,
                                  const ParameterVector& p);

// ============================================================================
// Time integration
// ============================================================================

struct NewmarkOptions {
    double beta = 0.25;
    double gamma = 0.5;
    double newton_tol = 1e-8;    // relative to the force scale of the step
    double newton_abs_tol = 1e-12;
    int max_iterations = 25;
};

/// Columns are the states at t = 0, dt, ..., n_steps*dt.
struct TimeHistory {
    double dt = 0.0;
    Matrix displacement;
    Matrix velocity;
    Matrix acceleration;

    Index n_dof() const { return displacement.rows(); }
    Index n_steps() const { return displacement.cols(); }
};

Index step_count(double dt, double T);

TimeHistory integrate_newmark(const FOMSystem& system, const ParameterVector& p, double dt, double T,
                              const Vector& u0, const Vector& v0, const NewmarkOptions& options = {});

/// Copy of `system` whose element linear stiffnesses are independent draws
/// N(k_elem(p), sigma^2), clamped positive. sigma == 0 returns the system unchanged.
FOMSystem make_perturbed_twin(const FOMSystem& system, const ParameterVector& p, double sigma,
                              std::uint64_t seed);

}  // namespace vprom::dynamics
