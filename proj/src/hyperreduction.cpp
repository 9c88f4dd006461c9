#include "vprom/hyperreduction.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace vprom::hyper {

using dynamics::Element;

ECSWSystem build_ecsw_system(const std::vector<TrainingState>& states, const Matrix& basis,
                             const dynamics::FOMSystem& system) {
    if (states.empty()) throw ConfigError("ECSW needs at least one training state");
    require_dims(basis.rows() == system.n_dof, "basis rows must equal n_dof");
    const Index r = basis.cols();
    const Index n_el = system.n_elements();
    const Index n_states = static_cast<Index>(states.size());

    Matrix lever(n_el, r);
    for (Index e = 0; e < n_el; ++e) {
        const auto& el = system.elements[static_cast<std::size_t>(e)];
        lever.row(e) = basis.row(el.a);
        if (el.b != Element::kGround) lever.row(e) -= basis.row(el.b);
    }

    ECSWSystem out;
    out.G.resize(r * n_states, n_el);
    for (Index s = 0; s < n_states; ++s) {
        const auto& st = states[static_cast<std::size_t>(s)];
        require_dims(st.u.size() == system.n_dof, "training state size must equal n_dof");
        const auto laws = dynamics::element_laws(system, st.p);
        for (Index e = 0; e < n_el; ++e) {
            const auto& el = system.elements[static_cast<std::size_t>(e)];
            const double f = dynamics::spring_force(laws[static_cast<std::size_t>(e)], dynamics::elongation(el, st.u));
            out.G.block(s * r, e, r, 1) = f * lever.row(e).transpose();
        }
    }
    out.b = out.G.rowwise().sum();
    return out;
}

ECSWWeights solve_sparse_nnls(const Matrix& G, const Vector& b, double tau) {
    if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("ECSW tolerance must lie in [0, 1)");
    require_dims(G.rows() == b.size(), "G and b row counts differ");
    const Index m = G.cols();
    const double b_norm = b.norm();

    ECSWWeights w;
    w.tolerance = tau;
    w.n_elements_total = m;
    if (b_norm == 0.0) {
        w.converged = true;
        return w;
    }

    Vector x = Vector::Zero(m);
    std::vector<char> active(static_cast<std::size_t>(m), 0);
    std::vector<Index> set;
    Vector residual = b;
    double rel = 1.0;
    const double kkt_floor = 1e-13 * G.norm() * b_norm;

    auto restricted_solve = [&](const std::vector<Index>& cols) {
        Matrix sub(G.rows(), static_cast<Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) sub.col(static_cast<Index>(i)) = G.col(cols[i]);
        return Vector(sub.colPivHouseholderQr().solve(b));
    };

    const Index max_outer = 3 * m + 10;
    for (Index outer = 0; outer < max_outer && rel > tau; ++outer) {
        const Vector gradient = G.transpose() * residual;
        Index best = -1;
        double best_val = kkt_floor;
        for (Index j = 0; j < m; ++j) {
            if (!active[static_cast<std::size_t>(j)] && gradient(j) > best_val) {
                best_val = gradient(j);
                best = j;
            }
        }
        if (best < 0) break;  // KKT conditions hold: no column can reduce the residual
        active[static_cast<std::size_t>(best)] = 1;
        set.push_back(best);

        // Inner loop: restricted least squares, stepping back to keep x >= 0.
        for (Index inner = 0; inner <= m; ++inner) {
            const Vector z = restricted_solve(set);
            bool feasible = true;
            for (Index i = 0; i < z.size(); ++i) feasible = feasible && z(i) > 0.0;
            if (feasible) {
                for (std::size_t i = 0; i < set.size(); ++i) x(set[i]) = z(static_cast<Index>(i));
                break;
            }
            double alpha = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < set.size(); ++i) {
                const double zi = z(static_cast<Index>(i));
                const double xi = x(set[i]);
                if (zi <= 0.0) alpha = std::min(alpha, xi / (xi - zi));
            }
            for (std::size_t i = 0; i < set.size(); ++i) {
                const double xi = x(set[i]);
                x(set[i]) = xi + alpha * (z(static_cast<Index>(i)) - xi);
            }
            std::vector<Index> kept;
            for (Index j : set) {
                if (x(j) > 1e-14 * std::max(1.0, x.cwiseAbs().maxCoeff())) {
                    kept.push_back(j);
                } else {
                    x(j) = 0.0;
                    active[static_cast<std::size_t>(j)] = 0;
                }
            }
            set = std::move(kept);
            if (set.empty()) break;
        }
        residual = b - G * x;
        rel = residual.norm() / b_norm;
        w.residual_history.push_back(rel);
    }

    std::sort(set.begin(), set.end());
    w.element_ids = set;
    w.weights.resize(static_cast<Index>(set.size()));
    for (std::size_t i = 0; i < set.size(); ++i) w.weights(static_cast<Index>(i)) = x(set[i]);
    w.residual = rel;
    w.converged = rel <= tau || (tau == 0.0 && rel <= 1e-10);
    return w;
}

ECSWWeights unit_weights(const dynamics::FOMSystem& system) {
    ECSWWeights w;
    w.n_elements_total = system.n_elements();
    w.element_ids.resize(static_cast<std::size_t>(system.n_elements()));
    for (Index e = 0; e < system.n_elements(); ++e) w.element_ids[static_cast<std::size_t>(e)] = e;
    w.weights = Vector::Ones(system.n_elements());
    w.converged = true;
    return w;
}

ProjectedElementForce::ProjectedElementForce(const dynamics::FOMSystem& system, const reduction::PODBasis& basis,
                                             const ECSWWeights& weights, const dynamics::ParameterVector& p) {
    const bool bound = basis.id() == weights.basis_hash || (basis.parent && *basis.parent == weights.basis_hash);
    if (!bound) throw Error("ECSW weights are stale: basis " + hash_hex(basis.id()) + " is not inside the span of " +
                            hash_hex(weights.basis_hash));
    build(system, basis.modes, weights.element_ids, weights.weights, p);
}

ProjectedElementForce::ProjectedElementForce(const dynamics::FOMSystem& system, const Matrix& basis,
                                             const dynamics::ParameterVector& p) {
    const auto all = unit_weights(system);
    build(system, basis, all.element_ids, all.weights, p);
}

void ProjectedElementForce::build(const dynamics::FOMSystem& system, const Matrix& basis,
                                  const std::vector<Index>& ids, const Vector& weights,
                                  const dynamics::ParameterVector& p) {
    require_dims(basis.rows() == system.n_dof, "basis rows must equal n_dof");
    require_dims(static_cast<Index>(ids.size()) == weights.size(), "one weight per selected element");
    const auto laws = dynamics::element_laws(system, p);
    const Index n_sel = static_cast<Index>(ids.size());
    lever_.resize(n_sel, basis.cols());
    weight_ = weights;
    k_lin_.resize(n_sel);
    k_cub_.resize(n_sel);
    for (Index i = 0; i < n_sel; ++i) {
        const Index e = ids[static_cast<std::size_t>(i)];
        if (e < 0 || e >= system.n_elements()) throw DimensionError("element id out of range");
        const auto& el = system.elements[static_cast<std::size_t>(e)];
        lever_.row(i) = basis.row(el.a);
        if (el.b != Element::kGround) lever_.row(i) -= basis.row(el.b);
        k_lin_(i) = laws[static_cast<std::size_t>(e)].k_lin;
        k_cub_(i) = laws[static_cast<std::size_t>(e)].k_cub;
    }
}

void ProjectedElementForce::evaluate(const Vector& q, Vector& force, Matrix* tangent) const {
    require_dims(q.size() == lever_.cols(), "reduced state size mismatch");
    const Vector d = lever_ * q;
    const Vector d2 = d.cwiseProduct(d);
    const Vector f = (k_lin_.array() * d.array() + k_cub_.array() * d2.array() * d.array()).matrix();
    force.noalias() = lever_.transpose() * weight_.cwiseProduct(f);
    if (tangent) {
        const Vector kt = weight_.array() * (k_lin_.array() + 3.0 * k_cub_.array() * d2.array());
        tangent->noalias() = lever_.transpose() * kt.asDiagonal() * lever_;
    }
}

ReducedForce reduced_force_hyper(const ECSWWeights& weights, const dynamics::FOMSystem& system,
                                 const reduction::PODBasis& basis, const Vector& q,
                                 const dynamics::ParameterVector& p) {
    ProjectedElementForce proj(system, basis, weights, p);
    ReducedForce out;
    out.K.resize(basis.order(), basis.order());
    proj.evaluate(q, out.g, &out.K);
    return out;
}

}  // namespace vprom::hyper
