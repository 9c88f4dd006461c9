#pragma once

// Energy-conserving sampling and weighting (ECSW): pick a weighted subset of
// elements whose projected internal forces reproduce the full projected force
// on training states.

#include "vprom/common.hpp"
#include "vprom/dynamics.hpp"
#include "vprom/reduction.hpp"

#include <cstdint>
#include <vector>

namespace vprom::hyper {

struct TrainingState {
    Vector u;
    dynamics::ParameterVector p;
};

/// G: one column per element, r rows per training state holding V^T g_e(u_s).
/// b: the full projected force, b = G * 1.
struct ECSWSystem {
    Matrix G;
    Vector b;
};

ECSWSystem build_ecsw_system(const std::vector<TrainingState>& states, const Matrix& basis,
                             const dynamics::FOMSystem& system);

struct ECSWWeights {
    std::vector<Index> element_ids;  // selected subset, ascending
    Vector weights;                  // one strictly positive weight per selected element
    double residual = 0.0;           // ||G xi - b|| / ||b||
    double tolerance = 0.0;
    bool converged = false;
    std::vector<double> residual_history;  // relative residual after every greedy iteration
    Index n_elements_total = 0;
    std::uint64_t basis_hash = 0;          // id of the basis the weights were trained for

    Index size() const { return static_cast<Index>(element_ids.size()); }
};

/// Greedy active-set sparse NNLS (Lawson-Hanson with early exit once
/// ||G xi - b|| <= tau ||b||). On failure the best iterate is returned with
/// converged = false.
ECSWWeights solve_sparse_nnls(const Matrix& G, const Vector& b, double tau);

/// Full element set with unit weights.
ECSWWeights unit_weights(const dynamics::FOMSystem& system);

/// Projected internal force of a subset of elements:
///     g(q) = sum_e xi_e V^T g_e(V q),   K(q) = dg/dq.
/// Each element only needs the rows of V for its two dofs; they are cached
/// as one row per element: L_e = V(a,:) - V(b,:).
class ProjectedElementForce {
public:
    /// Hyper-reduced assembly. Throws when `basis` is neither the basis the
    /// weights were trained for nor generated inside its span.
    ProjectedElementForce(const dynamics::FOMSystem& system, const reduction::PODBasis& basis,
                          const ECSWWeights& weights, const dynamics::ParameterVector& p);
    /// Full assembly over every element.
    ProjectedElementForce(const dynamics::FOMSystem& system, const Matrix& basis, const dynamics::ParameterVector& p);

    Index order() const { return lever_.cols(); }
    Index n_elements() const { return lever_.rows(); }

    /// Evaluates the force and (optionally) the tangent at reduced state q.
    void evaluate(const Vector& q, Vector& force, Matrix* tangent) const;

private:
    void build(const dynamics::FOMSystem& system, const Matrix& basis, const std::vector<Index>& ids,
               const Vector& weights, const dynamics::ParameterVector& p);

    Matrix lever_;   // n_sel x r
    Vector weight_;
    Vector k_lin_;
    Vector k_cub_;
};

struct ReducedForce {
    Vector g;
    Matrix K;
};

ReducedForce reduced_force_hyper(const ECSWWeights& weights, const dynamics::FOMSystem& system,
                                 const reduction::PODBasis& basis, const Vector& q,
                                 const dynamics::ParameterVector& p);

}  // namespace vprom::hyper
