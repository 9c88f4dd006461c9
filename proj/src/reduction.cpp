#include "vprom/reduction.hpp"

#include "vprom/log.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace vprom::reduction {

SnapshotMatrix assemble_snapshots(const std::vector<dynamics::TimeHistory>& histories,
                                  const std::vector<dynamics::ParameterVector>& params) {
    if (histories.empty()) throw DimensionError("no histories to assemble");
    require_dims(params.size() == histories.size(), "one parameter tag per history required");
    const Index n = histories.front().n_dof();
    Index total = 0;
    for (const auto& h : histories) {
        require_dims(h.n_dof() == n, "histories disagree on the number of dofs");
        total += h.n_steps();
    }
    SnapshotMatrix s;
    s.data.resize(n, total);
    Index col = 0;
    for (const auto& h : histories) {
        s.data.middleCols(col, h.n_steps()) = h.displacement;
        s.ranges.emplace_back(col, h.n_steps());
        col += h.n_steps();
    }
    s.tags = params;
    return s;
}

double tail_energy(const Vector& sv, Index r) {
    const double total = sv.squaredNorm();
    if (total <= 0.0) return 0.0;
    if (r >= sv.size()) return 0.0;
    return sv.tail(sv.size() - r).squaredNorm() / total;
}

Index truncation_order(const Vector& sv, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("POD tolerance must lie in (0, 1)");
    const double total = sv.squaredNorm();
    if (!(total > 0.0)) throw NumericError("snapshot matrix carries no energy");
    // Suffix sums avoid cancellation in 1 - head/total.
    double tail = 0.0;
    Index r = sv.size();
    for (Index i = sv.size() - 1; i >= 1; --i) {
        tail += sv(i) * sv(i);
        if (tail / total > eps) break;
        r = i;
    }
    return std::max<Index>(r, 1);
}

namespace {

PODBasis svd_basis(const Matrix& snapshots, Index r_request, double eps) {
    if (snapshots.size() == 0) throw DimensionError("empty snapshot matrix");
    if (!snapshots.allFinite()) throw NumericError("snapshot matrix is not finite");
    Eigen::BDCSVD<Matrix> svd(snapshots, Eigen::ComputeThinU);
    PODBasis basis;
    basis.singular_values = svd.singularValues();
    if (!(basis.singular_values.squaredNorm() > 0.0)) throw NumericError("snapshot matrix carries no energy");
    Index r = r_request > 0 ? r_request : truncation_order(basis.singular_values, eps);
    const double floor = basis.singular_values(0) * 1e-14;
    Index rank = 0;
    while (rank < basis.singular_values.size() && basis.singular_values(rank) > floor) ++rank;
    r = std::clamp<Index>(r, 1, std::max<Index>(rank, 1));
    basis.modes = svd.matrixU().leftCols(r);
    return basis;
}

}  // namespace

PODBasis compute_pod(const Matrix& snapshots, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("POD tolerance must lie in (0, 1)");
    return svd_basis(snapshots, 0, eps);
}

PODBasis compute_pod_order(const Matrix& snapshots, Index r) {
    if (r < 1) throw ConfigError("POD order must be >= 1");
    return svd_basis(snapshots, r, 0.5);
}

void orthonormalize(Matrix& v) {
    for (int pass = 0; pass < 2; ++pass) {
        for (Index j = 0; j < v.cols(); ++j) {
            for (Index i = 0; i < j; ++i) v.col(j) -= v.col(i).dot(v.col(j)) * v.col(i);
            const double norm = v.col(j).norm();
            if (!(norm > 1e-300)) throw NumericError("basis lost rank during orthonormalization");
            v.col(j) /= norm;
        }
    }
}

TangentVector grassmann_log(const Matrix& v0, const Matrix& vi) {
    require_dims(v0.rows() == vi.rows() && v0.cols() == vi.cols(), "grassmann_log: basis shapes differ");
    const Matrix overlap = v0.transpose() * vi;  // r x r
    Eigen::JacobiSVD<Matrix> osvd(overlap);
    const Vector& os = osvd.singularValues();
    if (os.size() == 0 || os(os.size() - 1) < 1e-10)
        throw GeometryError("subspaces are too far apart for the Grassmann log map (V0^T Vi singular)");

    // M = (I - V0 V0^T) Vi (V0^T Vi)^{-1}; the right division is a transposed solve.
    const Matrix horizontal = vi - v0 * overlap;
    const Matrix m = overlap.transpose().fullPivLu().solve(horizontal.transpose()).transpose();
    Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector angles = svd.singularValues().array().atan();
    TangentVector t;
    t.gamma = svd.matrixU() * angles.asDiagonal() * svd.matrixV().transpose();
    t.gamma -= v0 * (v0.transpose() * t.gamma);
    return t;
}

Matrix grassmann_exp(const Matrix& v0, const TangentVector& tangent) {
    require_dims(v0.rows() == tangent.gamma.rows() && v0.cols() == tangent.gamma.cols(),
                 "grassmann_exp: tangent shape differs from the base point");
    if (tangent.gamma.isZero(0.0)) return v0;
    // With Gamma = U S W^T, U sin(S) W^T = Gamma W sinc(S) W^T. cos(s) and
    // sin(s)/s are functions of s^2, so the r x r eigenproblem of Gamma^T Gamma
    // is enough and stays accurate for small angles.
    const Matrix& g = tangent.gamma;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(g.transpose() * g);
    const Index r = g.cols();
    Vector c(r), sc(r);
    for (Index i = 0; i < r; ++i) {
        const double s = std::sqrt(std::max(0.0, eig.eigenvalues()(i)));
        c(i) = std::cos(s);
        sc(i) = s < 1e-4 ? 1.0 - s * s / 6.0 : std::sin(s) / s;
    }
    const Matrix& w = eig.eigenvectors();
    Matrix v = v0 * (w * c.asDiagonal() * w.transpose()) + g * (w * sc.asDiagonal() * w.transpose());
    orthonormalize(v);
    return v;
}

Vector CoefficientMatrix::flatten() const { return Eigen::Map<const Vector>(X.data(), X.size()); }

CoefficientMatrix CoefficientMatrix::unflatten(const Vector& flat, Index rows, Index cols) {
    require_dims(flat.size() == rows * cols, "flattened coefficient length mismatch");
    CoefficientMatrix c;
    c.X = Eigen::Map<const Matrix>(flat.data(), rows, cols);
    return c;
}

CoefficientMatrix compute_coefficients(const TangentVector& tangent, const GlobalBasis& global) {
    const Matrix& vg = global.modes;
    require_dims(vg.rows() == tangent.gamma.rows(), "compute_coefficients: row dimensions differ");
    CoefficientMatrix c;
    const Index rt = vg.cols();
    if ((vg.transpose() * vg - Matrix::Identity(rt, rt)).norm() <= 1e-10) {
        c.X = vg.transpose() * tangent.gamma;
        return c;
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(vg);
    if (cod.rank() < rt) log::warn("compute_coefficients: global basis is rank deficient, using pseudo-inverse");
    c.X = cod.solve(tangent.gamma);
    return c;
}

Matrix reference_point(const GlobalBasis& global, Index r) {
    if (r < 1 || r > global.order())
        throw ConfigError("local order r must satisfy 1 <= r <= global order");
    return global.modes.leftCols(r);
}

PODBasis reconstruct_basis(const CoefficientMatrix& coeffs, const GlobalBasis& global, const Matrix& v0) {
    require_dims(coeffs.X.rows() == global.order(), "coefficient rows must equal the global order");
    require_dims(coeffs.X.cols() == v0.cols() && global.n() == v0.rows(), "coefficient columns must equal r");
    TangentVector t;
    t.gamma = global.modes * coeffs.X;
    t.gamma -= v0 * (v0.transpose() * t.gamma);
    PODBasis out;
    out.modes = grassmann_exp(v0, t);
    out.parent = global.id();
    return out;
}

Vector principal_angles(const Matrix& a, const Matrix& b) {
    require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "principal_angles: shapes differ");
    const Matrix ab = a.transpose() * b;
    Vector cosines = Eigen::JacobiSVD<Matrix>(ab).singularValues();       // descending
    Vector sines = Eigen::JacobiSVD<Matrix>(b - a * ab).singularValues(); // descending
    const Index r = a.cols();
    Vector angles(r);
    for (Index i = 0; i < r; ++i) {
        // i-th smallest angle: largest cosine with smallest sine.
        angles(i) = std::atan2(std::min(1.0, sines(r - 1 - i)), std::min(1.0, cosines(i)));
    }
    return angles;
}

}  // namespace vprom::reduction
