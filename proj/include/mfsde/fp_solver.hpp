#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "mfsde/coefficients.hpp"
#include "mfsde/grid.hpp"
#include "mfsde/tridiag.hpp"

namespace mfsde {

struct FpConfig {
    int n_steps = 100;
    int picard_iters = 0;      // 0: coefficients frozen at the previous slice
    double picard_tol = 1e-10;
};

namespace detail {

/// One theta-weighted step of the conservative flux form
///   c_i (w' - w)/dt = theta*[D F(w')]_i + (1-theta)*[D F(w)]_i + [D F_ext]_i,
/// where F(w)_{i+1/2} = (A_{i+1}w_{i+1} - A_i w_i)/dx - B_{i+1/2}(w_i+w_{i+1})/2,
/// flux vanishes at both ends, and the boundary cells have width dx/2 so the
/// trapezoid mass Sum_i c_i w_i is conserved exactly.
///
/// F_ext carries the explicit part (nonlocal terms and sources) as node
/// fields P, Q with F_ext_{i+1/2} = (P_{i+1}-P_i)/dx - (Q_i+Q_{i+1})/2.
class FluxStepper {
public:
    static constexpr double theta = 0.5; // Crank-Nicolson on the local operator

    FluxStepper(const Grid1D& grid, std::vector<double> a_nodes, std::vector<double> b_nodes,
                double dt)
        : n_(grid.n_points()), dx_(grid.dx()), dt_(dt), a_(std::move(a_nodes)),
          b_half_(static_cast<std::size_t>(n_ - 1)) {
        for (int i = 0; i + 1 < n_; ++i)
            b_half_[static_cast<std::size_t>(i)] = 0.5 * (b_nodes[static_cast<std::size_t>(i)] +
                                                          b_nodes[static_cast<std::size_t>(i + 1)]);
        std::vector<double> lo(static_cast<std::size_t>(n_)), di(static_cast<std::size_t>(n_)),
            up(static_cast<std::size_t>(n_));
        const double td = theta * dt_;
        for (int i = 0; i < n_; ++i) {
            const double c = cell(i);
            double mid, lower = 0.0, upper = 0.0;
            if (i == 0) {
                mid = -a_[0] / dx_ - 0.5 * bh(0);
                upper = a_[1] / dx_ - 0.5 * bh(0);
            } else if (i == n_ - 1) {
                mid = -a_[static_cast<std::size_t>(n_ - 1)] / dx_ + 0.5 * bh(n_ - 2);
                lower = a_[static_cast<std::size_t>(n_ - 2)] / dx_ + 0.5 * bh(n_ - 2);
            } else {
                mid = -2.0 * a_[static_cast<std::size_t>(i)] / dx_ - 0.5 * (bh(i) - bh(i - 1));
                lower = a_[static_cast<std::size_t>(i - 1)] / dx_ + 0.5 * bh(i - 1);
                upper = a_[static_cast<std::size_t>(i + 1)] / dx_ - 0.5 * bh(i);
            }
            di[static_cast<std::size_t>(i)] = c - td * mid;
            lo[static_cast<std::size_t>(i)] = -td * lower;
            up[static_cast<std::size_t>(i)] = -td * upper;
        }
        factor_.emplace(lo, di, up);
    }

    double cell(int i) const { return (i == 0 || i == n_ - 1) ? 0.5 * dx_ : dx_; }

    /// Half-node flux of the pair (A, B) applied to w:
    ///   F_{i+1/2} = (A_{i+1}w_{i+1} - A_i w_i)/dx - (B_i+B_{i+1})/2 * (w_i+w_{i+1})/2.
    /// The perturbation fluxes of the linearized equations are built with the
    /// same helper so they match the local operator stencil exactly.
    static void flux_of(const Grid1D& g, const std::vector<double>& a,
                        const std::vector<double>& b, const std::vector<double>& w,
                        std::vector<double>& fh) {
        const int n = g.n_points();
        const double dx = g.dx();
        fh.resize(static_cast<std::size_t>(n - 1));
        for (int i = 0; i + 1 < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            fh[k] = (a[k + 1] * w[k + 1] - a[k] * w[k]) / dx -
                    0.25 * (b[k] + b[k + 1]) * (w[k] + w[k + 1]);
        }
    }

    /// Scratch buffers owned by the caller; one per worker thread, so a
    /// single factorized stepper can advance many columns concurrently.
    struct Workspace {
        std::vector<double> flux, tmp;
    };

    /// [D F(w)]_i for the local flux; out must have size n.
    void apply_local(const std::vector<double>& w, std::vector<double>& out,
                     std::vector<double>& flux) const {
        flux.resize(static_cast<std::size_t>(n_ - 1));
        for (int i = 0; i + 1 < n_; ++i) {
            flux[static_cast<std::size_t>(i)] =
                (a_[static_cast<std::size_t>(i + 1)] * w[static_cast<std::size_t>(i + 1)] -
                 a_[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)]) /
                    dx_ -
                0.5 * bh(i) * (w[static_cast<std::size_t>(i)] + w[static_cast<std::size_t>(i + 1)]);
        }
        diff_half(flux, out);
    }

    /// Advances one column; ext_half_flux (n-1 half-node values) is added
    /// explicitly and may be null.
    std::vector<double> step(const std::vector<double>& w_old,
                             const std::vector<double>* ext_half_flux, Workspace& ws) const {
        std::vector<double> rhs(static_cast<std::size_t>(n_));
        ws.tmp.resize(static_cast<std::size_t>(n_));
        apply_local(w_old, ws.tmp, ws.flux);
        for (int i = 0; i < n_; ++i)
            rhs[static_cast<std::size_t>(i)] =
                cell(i) * w_old[static_cast<std::size_t>(i)] +
                dt_ * (1.0 - theta) * ws.tmp[static_cast<std::size_t>(i)];
        if (ext_half_flux != nullptr) {
            diff_half(*ext_half_flux, ws.tmp);
            for (int i = 0; i < n_; ++i)
                rhs[static_cast<std::size_t>(i)] += dt_ * ws.tmp[static_cast<std::size_t>(i)];
        }
        factor_->solve(rhs);
        return rhs;
    }

    std::vector<double> step(const std::vector<double>& w_old,
                             const std::vector<double>* ext_half_flux) const {
        Workspace ws;
        return step(w_old, ext_half_flux, ws);
    }

private:
    double bh(int i) const { return b_half_[static_cast<std::size_t>(i)]; }
    static void diff_half(const std::vector<double>& fh, std::vector<double>& out) {
        const std::size_t n = fh.size() + 1;
        out[0] = fh[0];
        for (std::size_t i = 1; i + 1 < n; ++i) out[i] = fh[i] - fh[i - 1];
        out[n - 1] = -fh[n - 2];
    }

    int n_;
    double dx_, dt_;
    std::vector<double> a_, b_half_;
    std::optional<TridiagFactor> factor_;
};

inline std::vector<double> sample_a(const CoefficientModel& model, const Grid1D& g,
                                    CoefficientModel::Inputs in) {
    std::vector<double> a(static_cast<std::size_t>(g.n_points()));
    for (int i = 0; i < g.n_points(); ++i) a[static_cast<std::size_t>(i)] = model.a(g.node(i), in);
    return a;
}
inline std::vector<double> sample_b(const CoefficientModel& model, const Grid1D& g,
                                    CoefficientModel::Inputs in) {
    std::vector<double> b(static_cast<std::size_t>(g.n_points()));
    for (int i = 0; i < g.n_points(); ++i) b[static_cast<std::size_t>(i)] = model.b(g.node(i), in);
    return b;
}

} // namespace detail

/// Solves the nonlocal Fokker-Planck equation forward from mu on [t, T].
inline DensityPath solve_fp(const CoefficientModel& model, const GridFunction& mu, double t,
                            double T, const FpConfig& cfg) {
    if (!(T > t)) throw std::invalid_argument("solve_fp: need T > t");
    if (!mu.all_finite()) throw std::invalid_argument("solve_fp: initial density is not finite");
    const Grid1D& g = mu.grid();
    const int n = g.n_points();
    if (std::abs(mu[0]) > 1e-10 || std::abs(mu[n - 1]) > 1e-10)
        throw std::invalid_argument(
            "solve_fp: initial density does not decay below 1e-10 at the domain boundary; "
            "enlarge the domain");

    DensityPath path(g, t, T, cfg.n_steps);
    path.push_slice(mu);
    path.min_value = *std::min_element(mu.values().begin(), mu.values().end());
    const double dt = path.dt();
    const auto cache = model.cache_for(g);

    std::vector<double> w = mu.values();
    for (int j = 0; j < cfg.n_steps; ++j) {
        GridFunction prev(g, w);
        auto in = model.functionals(cache, prev);
        std::vector<double> w_new;
        try {
            detail::FluxStepper stepper(g, detail::sample_a(model, g, in),
                                        detail::sample_b(model, g, in), dt);
            w_new = stepper.step(w, nullptr);
            bool converged = cfg.picard_iters == 0;
            for (int k = 0; k < cfg.picard_iters; ++k) {
                GridFunction mid(g, w_new);
                mid += prev;
                mid *= 0.5;
                in = model.functionals(cache, mid);
                detail::FluxStepper refreshed(g, detail::sample_a(model, g, in),
                                              detail::sample_b(model, g, in), dt);
                std::vector<double> w_next = refreshed.step(w, nullptr);
                double diff2 = 0.0;
                for (int i = 0; i < n; ++i) {
                    const double d = w_next[static_cast<std::size_t>(i)] - w_new[static_cast<std::size_t>(i)];
                    diff2 += d * d * quad_weight(g, i);
                }
                w_new = std::move(w_next);
                if (std::sqrt(diff2) < cfg.picard_tol) {
                    converged = true;
                    break;
                }
            }
            if (!converged)
                path.warnings.push_back("picard did not reach tol " +
                                        std::to_string(cfg.picard_tol) + " at step " +
                                        std::to_string(j));
        } catch (const numerical_error& e) {
            throw numerical_error(std::string(e.what()) + " (fp step " + std::to_string(j) + ")");
        }
        w = std::move(w_new);
        GridFunction slice(g, w);
        if (!slice.all_finite())
            throw numerical_error("solve_fp: non-finite slice at step " + std::to_string(j + 1));
        path.min_value = std::min(path.min_value,
                                  *std::min_element(w.begin(), w.end()));
        path.push_slice(std::move(slice));
    }
    return path;
}

/// || m^{t,mu}(T) - m^{s, m^{t,mu}(s)}(T) ||_{L2}: restarting at a mesh node s
/// reproduces the discrete recursion, so this measures the semigroup defect.
inline double flow_property_check(const CoefficientModel& model, const GridFunction& mu, double t,
                                  double s, double T, const FpConfig& cfg) {
    DensityPath full = solve_fp(model, mu, t, T, cfg);
    const int j = full.index_of_time(s); // throws if s is off the mesh
    FpConfig rest = cfg;
    rest.n_steps = cfg.n_steps - j;
    if (rest.n_steps == 0) return 0.0; // s == T
    DensityPath restart = solve_fp(model, full.slice(j), full.time(j), T, rest);
    GridFunction diff = full.slice(full.n_steps());
    diff -= restart.slice(restart.n_steps());
    return l2_norm(diff);
}

struct NormReport {
    std::vector<double> times;
    std::vector<double> mass;       // trapezoid integral per slice
    std::vector<double> l2;         // W^{0,2}
    std::vector<double> w12;        // W^{1,2}
    std::vector<double> w22;        // W^{2,2}
    double sup_l2 = 0.0, sup_w12 = 0.0, sup_w22 = 0.0;
    double holder_quotient = 0.0;   // max over pairs of ||m(s)-m(s')|| / |s-s'|^{1/2}
    double min_value = 0.0;
};

/// Sup-in-time Sobolev norms and the discrete 1/2-Hoelder quotient of a path.
inline NormReport norm_report(const DensityPath& path) {
    NormReport rep;
    const int m = path.n_steps();
    for (int j = 0; j <= m; ++j) {
        const GridFunction& u = path.slice(j);
        rep.times.push_back(path.time(j));
        rep.mass.push_back(quadrature(u));
        rep.l2.push_back(l2_norm(u));
        rep.w12.push_back(sobolev_norm(u, 1));
        rep.w22.push_back(sobolev_norm(u, 2));
        rep.sup_l2 = std::max(rep.sup_l2, rep.l2.back());
        rep.sup_w12 = std::max(rep.sup_w12, rep.w12.back());
        rep.sup_w22 = std::max(rep.sup_w22, rep.w22.back());
    }
    const double dt = path.dt();
    for (int j = 0; j <= m; ++j) {
        for (int k = j + 1; k <= m; ++k) {
            GridFunction d = path.slice(k);
            d -= path.slice(j);
            rep.holder_quotient =
                std::max(rep.holder_quotient, l2_norm(d) / std::sqrt((k - j) * dt));
        }
    }
    rep.min_value = path.min_value;
    return rep;
}

} // namespace mfsde
