#pragma once

// Implicit Newmark integration with Newton iterations, shared by the
// full-order and the reduced-order models.

#include "vprom/dynamics.hpp"

#include <algorithm>
#include <concepts>

namespace vprom {

/// A second-order system  M a + C v + f(u) = F(t)  exposing what Newton needs.
template <typename Model>
concept NewmarkModel = requires(Model& m, const Model& cm, const Vector& x, double t, double c) {
    { cm.size() } -> std::convertible_to<Index>;
    { cm.load(t) } -> std::convertible_to<Vector>;
    { cm.mass_times(x) } -> std::convertible_to<Vector>;
    { cm.damping_times(x) } -> std::convertible_to<Vector>;
    /// Evaluate internal force and tangent at displacement x.
    m.update(x);
    { cm.internal_force() } -> std::convertible_to<Vector>;
    /// Solve (c_m M + c_d C + K_t) dx = rhs with the tangent of the last update.
    { m.solve(c, c, x) } -> std::convertible_to<Vector>;
    { m.solve_mass(x) } -> std::convertible_to<Vector>;
};

template <NewmarkModel Model>
dynamics::TimeHistory newmark_integrate(Model& model, double dt, Index n_steps, const Vector& u0,
                                        const Vector& v0, const dynamics::NewmarkOptions& opt) {
    const Index n = model.size();
    require_dims(u0.size() == n && v0.size() == n, "initial state size does not match the model");
    if (!(dt > 0.0)) throw ConfigError("time step must be positive");

    dynamics::TimeHistory h;
    h.dt = dt;
    h.displacement.resize(n, n_steps + 1);
    h.velocity.resize(n, n_steps + 1);
    h.acceleration.resize(n, n_steps + 1);

    Vector u = u0;
    Vector v = v0;
    model.update(u);
    // Initial acceleration from equilibrium: (M + 0*C + 0*K) a0 = F0 - C v0 - f(u0).
    Vector a = model.solve_mass(model.load(0.0) - model.damping_times(v) - model.internal_force());

    h.displacement.col(0) = u;
    h.velocity.col(0) = v;
    h.acceleration.col(0) = a;

    const double beta = opt.beta;
    const double gamma = opt.gamma;
    const double c_mass = 1.0 / (beta * dt * dt);
    const double c_damp = gamma / (beta * dt);

    Vector u_pred(n), v_pred(n), u_next(n), v_next(n), a_next(n), residual(n);
    for (Index step = 1; step <= n_steps; ++step) {
        const double t = static_cast<double>(step) * dt;
        const Vector f_ext = model.load(t);
        const double f_norm = f_ext.norm();

        u_pred = u + dt * v + (0.5 - beta) * dt * dt * a;
        v_pred = v + (1.0 - gamma) * dt * a;
        u_next = u_pred;

        bool converged = false;
        for (int it = 0; it <= opt.max_iterations; ++it) {
            a_next = c_mass * (u_next - u_pred);
            v_next = v_pred + gamma * dt * a_next;
            model.update(u_next);
            const Vector inertia = model.mass_times(a_next);
            const Vector& f_int = model.internal_force();
            residual = f_ext - inertia - model.damping_times(v_next) - f_int;

            const double scale = std::max({f_norm, inertia.norm(), f_int.norm()});
            const double r_norm = residual.norm();
            if (r_norm <= opt.newton_tol * scale || r_norm <= opt.newton_abs_tol) {
                converged = true;
                break;
            }
            if (it == opt.max_iterations) break;
            u_next += model.solve(c_mass, c_damp, residual);
            if (!u_next.allFinite()) break;
        }
        if (!converged) throw IntegrationError("Newton iteration did not converge", step);

        u = u_next;
        v = v_next;
        a = a_next;
        h.displacement.col(step) = u;
        h.velocity.col(step) = v;
        h.acceleration.col(step) = a;
    }
    return h;
}

}  // namespace vprom
