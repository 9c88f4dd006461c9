#pragma once

// Snapshot assembly, POD, and the Grassmann tangent-space machinery that turns
// local bases into coefficient matrices against a global basis and back.
//
// Local bases V_i are mapped to the tangent space at a reference point V0
// (the first r columns of the global basis) with the Grassmann log map. The
// tangent representative Gamma_i is expressed in the global basis,
// X_i = argmin ||V_global X - Gamma_i||_F, and a basis is recovered from any
// X by V = Exp_{V0}(V_global X).

#include "vprom/common.hpp"
#include "vprom/dynamics.hpp"

#include <optional>
#include <utility>
#include <vector>

namespace vprom::reduction {

struct SnapshotMatrix {
    Matrix data;                                 // n x sum(steps)
    std::vector<std::pair<Index, Index>> ranges; // [first column, column count) per sample
    std::vector<dynamics::ParameterVector> tags;
};

SnapshotMatrix assemble_snapshots(const std::vector<dynamics::TimeHistory>& histories,
                                  const std::vector<dynamics::ParameterVector>& params);

struct PODBasis {
    Matrix modes;             // n x r, orthonormal columns
    Vector singular_values;   // full spectrum, non-increasing
    /// Id of the basis whose span contains this one, when it was generated
    /// inside another basis (see reconstruct_basis).
    std::optional<std::uint64_t> parent;

    Index n() const { return modes.rows(); }
    Index order() const { return modes.cols(); }
    std::uint64_t id() const { return hash_matrix(modes); }
};

/// Global basis V_global (n x r_tilde); same representation as a POD basis.
using GlobalBasis = PODBasis;

/// Smallest r with sum_{i>r} s_i^2 / sum_i s_i^2 <= eps.
Index truncation_order(const Vector& singular_values, double eps);

/// Tail-energy ratio sum_{i>r} s_i^2 / sum_i s_i^2.
double tail_energy(const Vector& singular_values, Index r);

/// POD truncated by the tail-energy criterion.
PODBasis compute_pod(const Matrix& snapshots, double eps);

/// POD truncated at a fixed order (clamped to the available rank).
PODBasis compute_pod_order(const Matrix& snapshots, Index r);

struct TangentVector {
    Matrix gamma;  // n x r, horizontal at the base point: V0^T gamma = 0
};

TangentVector grassmann_log(const Matrix& v0, const Matrix& vi);
Matrix grassmann_exp(const Matrix& v0, const TangentVector& tangent);

struct CoefficientMatrix {
    Matrix X;  // r_tilde x r
    std::optional<dynamics::ParameterVector> tag;

    /// Column-major flattening, length r_tilde * r.
    Vector flatten() const;
    static CoefficientMatrix unflatten(const Vector& flat, Index rows, Index cols);
};

/// Least-squares coefficients of the tangent representative in the global
/// basis. Orthonormal global bases reduce to V_global^T Gamma; otherwise a
/// complete orthogonal decomposition (pseudo-inverse) is used.
CoefficientMatrix compute_coefficients(const TangentVector& tangent, const GlobalBasis& global);

/// Basis generated from coefficients: Exp_{V0}((I - V0 V0^T) V_global X).
/// The result records `global` as its parent span.
PODBasis reconstruct_basis(const CoefficientMatrix& coeffs, const GlobalBasis& global, const Matrix& v0);

/// Reference point of the tangent space: first r columns of the global basis.
Matrix reference_point(const GlobalBasis& global, Index r);

/// Principal angles between the column spaces of two orthonormal bases,
/// computed from sines so that tiny angles stay accurate.
Vector principal_angles(const Matrix& a, const Matrix& b);

/// In-place modified Gram-Schmidt (two passes).
void orthonormalize(Matrix& v);

}  // namespace vprom::reduction
