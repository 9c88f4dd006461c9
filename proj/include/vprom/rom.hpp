#pragma once

// Galerkin ROM of the chain:  M~ q'' + C~ q' + g~(q) = V^T F(t),
// with M~ = V^T M V, C~ = V^T C V and g~ assembled either over every element
// or over an ECSW-weighted subset.

#include "vprom/dynamics.hpp"
#include "vprom/hyperreduction.hpp"
#include "vprom/reduction.hpp"

#include <memory>
#include <optional>
#include <vector>

namespace vprom::rom {

struct ReducedSystem {
    std::shared_ptr<const dynamics::FOMSystem> system;
    reduction::PODBasis basis;
    Matrix mass;                                  // r x r, SPD
    std::optional<hyper::ECSWWeights> weights;    // absent: full element assembly
    Vector load_a;                                // V^T load_a
    Vector load_b;                                // V^T load_b

    Index order() const { return basis.order(); }
    bool hyper_reduced() const { return weights.has_value(); }
};

ReducedSystem galerkin_project(std::shared_ptr<const dynamics::FOMSystem> system, const reduction::PODBasis& basis,
                               std::optional<hyper::ECSWWeights> weights = std::nullopt);

struct ReducedHistory {
    dynamics::TimeHistory q;  // reduced coordinates, r x N_t
    std::uint64_t basis_id = 0;
};

ReducedHistory integrate_rom(const ReducedSystem& red, const dynamics::ParameterVector& p, double dt, double T,
                             const dynamics::NewmarkOptions& options = {});

/// u = V q per step, for displacement, velocity and acceleration.
dynamics::TimeHistory reconstruct_full(const ReducedHistory& q, const reduction::PODBasis& basis);

/// Relative error in percent over a subset of dofs (rows) and steps (columns);
/// std::nullopt selects all.
double error_metric(const Matrix& reference, const Matrix& approx,
                    const std::optional<std::vector<Index>>& dofs = std::nullopt,
                    const std::optional<std::vector<Index>>& steps = std::nullopt);

/// Dof with the largest absolute response over the whole history.
Index max_response_dof(const Matrix& displacement);

}  // namespace vprom::rom
