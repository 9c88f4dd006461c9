#include "vprom/rom.hpp"

#include "vprom/newmark.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace vprom::rom {

ReducedSystem galerkin_project(std::shared_ptr<const dynamics::FOMSystem> system, const reduction::PODBasis& basis,
                               std::optional<hyper::ECSWWeights> weights) {
    if (!system) throw ConfigError("galerkin_project: no system");
    const Matrix& v = basis.modes;
    require_dims(v.rows() == system->n_dof, "basis rows must equal n_dof");
    require_dims(v.cols() >= 1, "basis must have at least one column");
    if ((v.transpose() * v - Matrix::Identity(v.cols(), v.cols())).cwiseAbs().maxCoeff() > 1e-8)
        throw NumericError("galerkin_project: basis is not orthonormal");

    ReducedSystem red;
    red.basis = basis;
    red.mass = v.transpose() * (system->mass * v);
    red.mass = 0.5 * (red.mass + red.mass.transpose()).eval();
    Eigen::LLT<Matrix> llt(red.mass);
    if (llt.info() != Eigen::Success) throw NumericError("galerkin_project: reduced mass is not SPD");
    red.load_a = v.transpose() * system->excitation.load_a;
    red.load_b = v.transpose() * system->excitation.load_b;
    if (weights) {
        // Validates the basis binding up front.
        hyper::ProjectedElementForce(*system, basis, *weights, dynamics::ParameterVector{});
    }
    red.weights = std::move(weights);
    red.system = std::move(system);
    return red;
}

namespace {

class RomModel {
public:
    RomModel(const ReducedSystem& red, const dynamics::ParameterVector& p)
        : red_(red),
          force_(red.weights ? hyper::ProjectedElementForce(*red.system, red.basis, *red.weights, p)
                             : hyper::ProjectedElementForce(*red.system, red.basis.modes, p)),
          mass_llt_(red.mass) {
        const auto& sys = *red.system;
        const Matrix& v = red.basis.modes;
        // Linear damping is exact and precomputed; it never goes through ECSW.
        const Matrix k_lin = v.transpose() * (sys.linear_stiffness(p) * v);
        damping_ = sys.alpha_m * red.mass + sys.alpha_k * k_lin;
        amplitude_ = p.get(dynamics::param::kAmplitude, 1.0);
        const double dir = p.get(dynamics::param::kDirection, 0.0);
        load_shape_ = std::cos(dir) * red.load_a + std::sin(dir) * red.load_b;
        f_int_ = Vector::Zero(red.order());
        tangent_ = Matrix::Zero(red.order(), red.order());
    }

    Index size() const { return red_.order(); }
    Vector load(double t) const {
        if (red_.system->excitation.kind == dynamics::Excitation::Kind::None) return Vector::Zero(size());
        return (amplitude_ * red_.system->excitation.signal(t)) * load_shape_;
    }
    Vector mass_times(const Vector& a) const { return red_.mass * a; }
    Vector damping_times(const Vector& v) const { return damping_ * v; }
    const Vector& internal_force() const { return f_int_; }
    void update(const Vector& q) { force_.evaluate(q, f_int_, &tangent_); }

    Vector solve(double c_mass, double c_damp, const Vector& rhs) {
        const Matrix eff = c_mass * red_.mass + c_damp * damping_ + tangent_;
        Eigen::LLT<Matrix> llt(eff);
        if (llt.info() != Eigen::Success) {
            Eigen::PartialPivLU<Matrix> lu(eff);
            return lu.solve(rhs);
        }
        return llt.solve(rhs);
    }
    Vector solve_mass(const Vector& rhs) { return mass_llt_.solve(rhs); }

private:
    const ReducedSystem& red_;
    hyper::ProjectedElementForce force_;
    Eigen::LLT<Matrix> mass_llt_;
    Matrix damping_;
    Matrix tangent_;
    Vector f_int_;
    Vector load_shape_;
    double amplitude_ = 1.0;
};

}  // namespace

ReducedHistory integrate_rom(const ReducedSystem& red, const dynamics::ParameterVector& p, double dt, double T,
                             const dynamics::NewmarkOptions& options) {
    RomModel model(red, p);
    const Index n_steps = dynamics::step_count(dt, T);
    ReducedHistory out;
    out.q = newmark_integrate(model, dt, n_steps, Vector::Zero(red.order()), Vector::Zero(red.order()), options);
    out.basis_id = red.basis.id();
    return out;
}

dynamics::TimeHistory reconstruct_full(const ReducedHistory& q, const reduction::PODBasis& basis) {
    require_dims(q.q.displacement.rows() == basis.order(), "reduced history order differs from the basis");
    dynamics::TimeHistory h;
    h.dt = q.q.dt;
    h.displacement = basis.modes * q.q.displacement;
    h.velocity = basis.modes * q.q.velocity;
    h.acceleration = basis.modes * q.q.acceleration;
    return h;
}

double error_metric(const Matrix& reference, const Matrix& approx, const std::optional<std::vector<Index>>& dofs,
                    const std::optional<std::vector<Index>>& steps) {
    require_dims(reference.rows() == approx.rows() && reference.cols() == approx.cols(),
                 "error_metric: shapes differ");
    if ((dofs && dofs->empty()) || (steps && steps->empty())) throw ConfigError("error_metric: empty index set");
    auto all = [](Index n) {
        std::vector<Index> v(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
        return v;
    };
    const auto rows = dofs ? *dofs : all(reference.rows());
    const auto cols = steps ? *steps : all(reference.cols());
    double num = 0.0, den = 0.0;
    for (Index j : cols) {
        for (Index i : rows) {
            const double d = reference(i, j) - approx(i, j);
            num += d * d;
            den += reference(i, j) * reference(i, j);
        }
    }
    if (!(den > 0.0)) throw NumericError("error_metric: reference has zero energy");
    return 100.0 * std::sqrt(num) / std::sqrt(den);
}

Index max_response_dof(const Matrix& displacement) {
    Index row = 0, col = 0;
    displacement.cwiseAbs().maxCoeff(&row, &col);
    return row;
}

}  // namespace vprom::rom
