#pragma once

// Trajectory integration and trajectory-level stability machinery:
//
//   flow_integrate        x' = X(x)                        (RK4, fixed step)
//   el_integrate          x' = y, y' = -2 G(x, y)          (RK4, fixed step)
//   deviation_integrate   xi'' + 2 N xi' + 2 (dG/dx) xi = 0 along a base run
//   covariant_residual    max || D^2 xi/dt^2 - P xi || over the run, where
//                         D xi/dt = xi' + N xi; the end-to-end check that P
//                         is the curvature governing trajectory deviation
//   find_equilibria       damped Newton on X(x) = 0 with the exact Jacobian
//   stability_profile     pointwise Jacobi classification along a trajectory
//   grid_scan             pointwise classification over a rectangular grid
//
// Fixed-step RK4 keeps sample grids reproducible; dt is caller-chosen.

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kcc/errors.hpp"
#include "kcc/geometry.hpp"
#include "kcc/jet.hpp"
#include "kcc/linalg.hpp"
#include "kcc/model.hpp"
#include "kcc/spectral.hpp"

namespace kcc {

enum class TrajectoryKind { Flow, EulerLagrange };

struct Sample {
    double t;
    Vec x;
    Vec y;
};

struct Trajectory {
    std::vector<Sample> samples;
    double dt = 0.0;
    TrajectoryKind kind = TrajectoryKind::Flow;
};

namespace detail {

template <typename Rhs>
inline Vec rk4_step(const Vec& z, double h, Rhs&& f) {
    const Vec k1 = f(z);
    const Vec k2 = f(z + (h / 2.0) * k1);
    const Vec k3 = f(z + (h / 2.0) * k2);
    const Vec k4 = f(z + h * k3);
    Vec out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = z[i] + (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

// Step sizes covering [0, T]: floor(T/dt) full steps plus a short final step
// when T is not an exact multiple.
inline std::vector<double> step_plan(double T, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("integration step dt must be positive");
    if (T < 0.0) throw std::invalid_argument("integration horizon T must be non-negative");
    std::vector<double> steps;
    const double m = std::floor(T / dt + 1e-9);
    steps.assign(static_cast<std::size_t>(m), dt);
    const double rem = T - m * dt;
    if (rem > 1e-12 * std::max(1.0, T)) steps.push_back(rem);
    return steps;
}

inline void require_finite_state(const Vec& z, double t) {
    if (!all_finite(z))
        throw NonFiniteError("state left the double range at t = " + std::to_string(t));
}

inline Vec semispray_at(const VectorFieldModel& m, const Vec& x, const Vec& y) {
    const Jet1 jet = jet1(m, x);
    const std::size_t n = y.size();
    Vec g(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            s += (jet.jac(i, j) - jet.jac(j, i)) * y[j] + jet.jac(j, i) * jet.value[j];
        g[i] = -0.5 * s;
    }
    return g;
}

} // namespace detail

inline Trajectory flow_integrate(const VectorFieldModel& m, const Vec& x0, double T, double dt) {
    if (x0.size() != static_cast<std::size_t>(m.dim()))
        throw std::invalid_argument("flow_integrate: x0 has wrong dimension");
    Trajectory traj;
    traj.dt = dt;
    traj.kind = TrajectoryKind::Flow;

    const auto rhs = [&m](const Vec& x) { return m.eval(x); };
    const std::vector<double> steps = detail::step_plan(T, dt);

    Vec x = x0;
    double t = 0.0;
    traj.samples.push_back({t, x, m.eval(x)});
    std::size_t k = 0;
    for (double h : steps) {
        Vec y_next;
        try {
            x = detail::rk4_step(x, h, rhs);
            if (all_finite(x)) y_next = m.eval(x);
        } catch (const EvalError& e) {
            throw EvalError(std::string(e.what()) + " (flow integration reached t = " +
                            std::to_string(t) + ")");
        }
        ++k;
        t = (h == dt) ? static_cast<double>(k) * dt : t + h;
        detail::require_finite_state(x, t);
        traj.samples.push_back({t, x, std::move(y_next)});
    }
    return traj;
}

inline Trajectory el_integrate(const VectorFieldModel& m, const Vec& x0, const Vec& y0,
                               double T, double dt) {
    const std::size_t n = static_cast<std::size_t>(m.dim());
    if (x0.size() != n || y0.size() != n)
        throw std::invalid_argument("el_integrate: initial state has wrong dimension");
    Trajectory traj;
    traj.dt = dt;
    traj.kind = TrajectoryKind::EulerLagrange;

    const auto rhs = [&m, n](const Vec& z) {
        Vec x(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(n));
        Vec y(z.begin() + static_cast<std::ptrdiff_t>(n), z.end());
        const Vec g = detail::semispray_at(m, x, y);
        Vec dz(2 * n);
        for (std::size_t i = 0; i < n; ++i) {
            dz[i] = y[i];
            dz[n + i] = -2.0 * g[i];
        }
        return dz;
    };
    const std::vector<double> steps = detail::step_plan(T, dt);

    Vec z(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = x0[i];
        z[n + i] = y0[i];
    }
    double t = 0.0;
    const auto push = [&traj, n](double tt, const Vec& zz) {
        Vec x(zz.begin(), zz.begin() + static_cast<std::ptrdiff_t>(n));
        Vec y(zz.begin() + static_cast<std::ptrdiff_t>(n), zz.end());
        traj.samples.push_back({tt, std::move(x), std::move(y)});
    };
    push(t, z);
    std::size_t k = 0;
    for (double h : steps) {
        try {
            z = detail::rk4_step(z, h, rhs);
        } catch (const EvalError& e) {
            throw EvalError(std::string(e.what()) + " (Euler-Lagrange integration reached t = " +
                            std::to_string(t) + ")");
        }
        ++k;
        t = (h == dt) ? static_cast<double>(k) * dt : t + h;
        detail::require_finite_state(z, t);
        push(t, z);
    }
    return traj;
}

// --------------------------------------------------------------------------
// Equilibria

struct EquilibriaResult {
    std::vector<Vec> points;
    struct SeedFailure {
        std::size_t seed_index;
        std::string reason;
    };
    std::vector<SeedFailure> failures;
};

inline EquilibriaResult find_equilibria(const VectorFieldModel& m, const std::vector<Vec>& seeds,
                                        double tol = 1e-10, int max_iter = 50) {
    if (!(tol > 0.0)) throw std::invalid_argument("find_equilibria: tol must be positive");
    const std::size_t n = static_cast<std::size_t>(m.dim());
    EquilibriaResult result;

    for (std::size_t s = 0; s < seeds.size(); ++s) {
        Vec x = seeds[s];
        if (x.size() != n) {
            result.failures.push_back({s, "seed has wrong dimension"});
            continue;
        }
        bool converged = false;
        std::string failure;
        try {
            double res = max_abs(m.eval(x));
            for (int it = 0; it < max_iter && !converged; ++it) {
                if (res <= tol) {
                    converged = true;
                    break;
                }
                const Jet1 jet = jet1(m, x);
                LuFactors lu = lu_factor(jet.jac);
                Vec delta = jet.value;
                if (!lu_solve(lu, delta)) {
                    failure = "singular Jacobian";
                    break;
                }
                // Step halving on residual increase.
                double lambda = 1.0;
                bool accepted = false;
                for (int half = 0; half <= 20; ++half) {
                    Vec trial = x - lambda * delta;
                    const double trial_res = max_abs(m.eval(trial));
                    if (trial_res < res || trial_res <= tol) {
                        x = std::move(trial);
                        res = trial_res;
                        accepted = true;
                        break;
                    }
                    lambda *= 0.5;
                }
                if (!accepted) {
                    failure = "no descent direction (damping exhausted)";
                    break;
                }
            }
            if (!converged && failure.empty()) {
                if (max_abs(m.eval(x)) <= tol)
                    converged = true;
                else
                    failure = "no convergence after " + std::to_string(max_iter) + " iterations";
            }
        } catch (const EvalError& e) {
            failure = e.what();
        }
        if (!converged) {
            result.failures.push_back({s, failure});
            continue;
        }
        bool duplicate = false;
        for (const Vec& p : result.points) {
            double d = 0.0;
            for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(p[i] - x[i]));
            if (d <= 1e-6) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) result.points.push_back(std::move(x));
    }
    return result;
}

// --------------------------------------------------------------------------
// Deviation dynamics

struct DeviationRun {
    Trajectory base;
    std::vector<Vec> xi;
    std::vector<Vec> xidot;
    std::vector<double> covariant_residual; // per sample, 0 where no stencil fits
};

namespace detail {

struct DeviationCoeffs {
    Mat N;
    Mat Gx; // dG/dx
};

inline DeviationCoeffs deviation_coeffs(const VectorFieldModel& m, const Vec& x, const Vec& y) {
    const Jet2 jet = jet2(m, x);
    return {nonlinear_connection(jet), semispray_position_gradient(jet, y)};
}

// Cubic Hermite reconstruction of the base state halfway through a step, used
// for the RK4 middle stages. dx/dt is y for both trajectory kinds; for an
// Euler-Lagrange base dy/dt = -2G.
inline void base_midpoint(const VectorFieldModel& m, const Trajectory& base, std::size_t k,
                          Vec& x_mid, Vec& y_mid) {
    const Sample& a = base.samples[k];
    const Sample& b = base.samples[k + 1];
    const double h = b.t - a.t;
    const std::size_t n = a.x.size();
    x_mid.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        x_mid[i] = 0.5 * (a.x[i] + b.x[i]) + (h / 8.0) * (a.y[i] - b.y[i]);
    if (base.kind == TrajectoryKind::Flow) {
        y_mid = m.eval(x_mid);
    } else {
        const Vec ga = semispray_at(m, a.x, a.y);
        const Vec gb = semispray_at(m, b.x, b.y);
        y_mid.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            y_mid[i] = 0.5 * (a.y[i] + b.y[i]) + (h / 8.0) * (-2.0 * ga[i] + 2.0 * gb[i]);
    }
}

} // namespace detail

inline double covariant_residual(const VectorFieldModel& m, DeviationRun& run);

inline DeviationRun deviation_integrate(const VectorFieldModel& m, Trajectory base,
                                        const Vec& xi0, const Vec& xidot0) {
    const std::size_t n = static_cast<std::size_t>(m.dim());
    if (xi0.size() != n || xidot0.size() != n)
        throw std::invalid_argument("deviation_integrate: initial deviation has wrong dimension");
    if (base.samples.empty()) throw std::invalid_argument("deviation_integrate: empty base");

    DeviationRun run;
    run.xi.reserve(base.samples.size());
    run.xidot.reserve(base.samples.size());

    // State zeta = [xi, xi'], zeta' = [xi', -2N xi' - 2Gx xi].
    const auto rhs = [n](const detail::DeviationCoeffs& c, const Vec& z) {
        Vec dz(2 * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            dz[i] = z[n + i];
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                acc += -2.0 * c.N(i, j) * z[n + j] - 2.0 * c.Gx(i, j) * z[j];
            dz[n + i] = acc;
        }
        return dz;
    };

    Vec z(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = xi0[i];
        z[n + i] = xidot0[i];
    }
    const auto record = [&run, n](const Vec& zz) {
        run.xi.emplace_back(zz.begin(), zz.begin() + static_cast<std::ptrdiff_t>(n));
        run.xidot.emplace_back(zz.begin() + static_cast<std::ptrdiff_t>(n), zz.end());
    };
    record(z);

    detail::DeviationCoeffs at_k =
        detail::deviation_coeffs(m, base.samples[0].x, base.samples[0].y);
    for (std::size_t k = 0; k + 1 < base.samples.size(); ++k) {
        const double h = base.samples[k + 1].t - base.samples[k].t;
        Vec x_mid, y_mid;
        detail::base_midpoint(m, base, k, x_mid, y_mid);
        const detail::DeviationCoeffs at_mid = detail::deviation_coeffs(m, x_mid, y_mid);
        const detail::DeviationCoeffs at_k1 =
            detail::deviation_coeffs(m, base.samples[k + 1].x, base.samples[k + 1].y);

        const Vec k1 = rhs(at_k, z);
        const Vec k2 = rhs(at_mid, z + (h / 2.0) * k1);
        const Vec k3 = rhs(at_mid, z + (h / 2.0) * k2);
        const Vec k4 = rhs(at_k1, z + h * k3);
        for (std::size_t i = 0; i < z.size(); ++i)
            z[i] += (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        detail::require_finite_state(z, base.samples[k + 1].t);
        record(z);
        at_k = at_k1;
    }

    run.base = std::move(base);
    if (run.base.samples.size() >= 5) covariant_residual(m, run);
    return run;
}

// u = xi' + N xi, Du/dt = u' + N u with u' from the 5-point 4th-order central
// difference; returns max over stencil-covered samples of
// ||Du/dt - P xi||_inf / (1 + ||P xi||_inf) and stores the per-sample values.
inline double covariant_residual(const VectorFieldModel& m, DeviationRun& run) {
    const std::size_t count = run.base.samples.size();
    if (count < 5) throw TooFewSamplesError("covariant residual needs at least 5 samples");
    const std::size_t n = static_cast<std::size_t>(m.dim());

    std::vector<Mat> N(count), P(count);
    for (std::size_t k = 0; k < count; ++k) {
        const Jet2 jet = jet2(m, run.base.samples[k].x);
        N[k] = nonlinear_connection(jet);
        P[k] = deviation_tensor(jet, run.base.samples[k].y);
    }
    std::vector<Vec> u(count);
    for (std::size_t k = 0; k < count; ++k) u[k] = run.xidot[k] + N[k] * run.xi[k];

    run.covariant_residual.assign(count, 0.0);
    const double h = run.base.dt;
    double worst = 0.0;
    for (std::size_t k = 2; k + 2 < count; ++k) {
        // Only stencils on a uniform patch of the grid (a short final step
        // breaks uniformity at the tail).
        bool uniform = true;
        for (int j = -2; j <= 2; ++j) {
            const std::size_t idx = static_cast<std::size_t>(static_cast<std::ptrdiff_t>(k) + j);
            const double expect = run.base.samples[k].t + j * h;
            if (std::abs(run.base.samples[idx].t - expect) > 1e-9 * std::max(1.0, std::abs(expect)))
                uniform = false;
        }
        if (!uniform) continue;
        Vec du(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            du[i] = (u[k - 2][i] - 8.0 * u[k - 1][i] + 8.0 * u[k + 1][i] - u[k + 2][i]) /
                    (12.0 * h);
        const Vec cov = du + N[k] * u[k];
        const Vec pxi = P[k] * run.xi[k];
        const double r = max_abs(cov - pxi) / (1.0 + max_abs(pxi));
        run.covariant_residual[k] = r;
        worst = std::max(worst, r);
    }
    return worst;
}

// --------------------------------------------------------------------------
// Stability aggregation

struct ProfileEntry {
    double t;
    double max_re;
    Classification classification;
};

struct StabilityProfile {
    std::vector<ProfileEntry> entries;
    // JacobiStable only when every computed sample is JacobiStable; unstable
    // when any sample is unstable by the eigenvalue test or by an applicable
    // odd-skew instability; Marginal otherwise. This aggregates the pointwise
    // criterion over the computed samples only.
    Classification aggregate = Classification::Marginal;
};

inline StabilityProfile stability_profile(const VectorFieldModel& m, const Trajectory& traj,
                                          double tol = 1e-9) {
    if (traj.samples.empty()) throw std::invalid_argument("stability_profile: empty trajectory");
    StabilityProfile prof;
    bool all_stable = true;
    bool any_unstable = false;
    for (const Sample& s : traj.samples) {
        const GeometryFrame frame = geometry_frame(m, s.x, s.y);
        const SpectrumReport rep = classify_jacobi(frame.P, tol);
        const OddSkewInstability skew = odd_skew_instability(frame, tol);
        prof.entries.push_back({s.t, rep.max_re, rep.classification});
        all_stable &= rep.classification == Classification::JacobiStable;
        any_unstable |= combined_verdict(rep, skew) == Classification::JacobiUnstable;
    }
    prof.aggregate = all_stable ? Classification::JacobiStable
                   : any_unstable ? Classification::JacobiUnstable
                                  : Classification::Marginal;
    return prof;
}

// --------------------------------------------------------------------------
// Grid scan

struct GridAxis {
    double min = 0.0;
    double max = 0.0;
    std::size_t count = 1;
};

struct YPolicy {
    enum class Kind { OnShell, Fixed };
    Kind kind = Kind::OnShell;
    Vec fixed;

    static YPolicy on_shell() { return {}; }
    static YPolicy fixed_fiber(Vec y) { return {Kind::Fixed, std::move(y)}; }
};

struct GridCell {
    Vec x;
    Vec y;
    double max_re = 0.0;
    Classification classification = Classification::Marginal;
    bool error = false;
    std::string error_message;
};

struct StabilityMap {
    std::vector<GridAxis> axes;
    std::vector<GridCell> cells; // row-major, axis 1 fastest
};

inline StabilityMap grid_scan(const VectorFieldModel& m, const std::vector<GridAxis>& axes,
                              const YPolicy& policy, double tol = 1e-9) {
    const std::size_t n = static_cast<std::size_t>(m.dim());
    if (axes.size() != n) throw std::invalid_argument("grid_scan: region has wrong dimension");
    for (const GridAxis& a : axes) {
        if (a.count < 1) throw std::invalid_argument("grid_scan: axis count must be >= 1");
        if (!std::isfinite(a.min) || !std::isfinite(a.max))
            throw std::invalid_argument("grid_scan: region bounds must be finite");
    }
    if (policy.kind == YPolicy::Kind::Fixed && policy.fixed.size() != n)
        throw std::invalid_argument("grid_scan: fixed fiber has wrong dimension");

    std::size_t total = 1;
    for (const GridAxis& a : axes) total *= a.count;

    StabilityMap map;
    map.axes = axes;
    map.cells.resize(total);

    for (std::size_t c = 0; c < total; ++c) {
        GridCell& cell = map.cells[c];
        cell.x.resize(n);
        std::size_t rem = c;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = rem % axes[i].count;
            rem /= axes[i].count;
            cell.x[i] = axes[i].count == 1
                            ? axes[i].min
                            : axes[i].min + static_cast<double>(k) * (axes[i].max - axes[i].min) /
                                                static_cast<double>(axes[i].count - 1);
        }
        try {
            cell.y = policy.kind == YPolicy::Kind::OnShell ? m.eval(cell.x) : policy.fixed;
            const GeometryFrame frame = geometry_frame(m, cell.x, cell.y);
            const SpectrumReport rep = classify_jacobi(frame.P, tol);
            cell.max_re = rep.max_re;
            cell.classification = rep.classification;
        } catch (const std::exception& e) {
            // EvalError at the node, or a frame so large its spectrum is not
            // representable; either way the cell is recorded and the scan
            // moves on.
            cell.error = true;
            cell.error_message = e.what();
            cell.max_re = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return map;
}

} // namespace kcc
