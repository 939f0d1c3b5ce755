#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "mfsde/coefficients.hpp"
#include "mfsde/fp_solver.hpp"
#include "mfsde/grid.hpp"
#include "mfsde/kernel_flow.hpp"
#include "mfsde/sde.hpp"
#include "mfsde/stats.hpp"

namespace mfsde {

/// Terminal functional Phi(x, m) = g(x) * F(m) + c with closed-form
/// derivatives; dPhi/dm(x,m)(.) = g(x) * F-weight(m) * h(.).
class TerminalFunctional {
public:
    TerminalFunctional(Profile g, SmoothFunctional F, double offset = 0.0)
        : g_(g), F_(std::move(F)), c_(offset) {}

    struct MValues {
        double F = 0.0;      // F(m)
        double weight = 0.0; // dF/dm(m) = weight * h
    };
    MValues prep(const GridFunction& m) const { return MValues{F_.value(m), F_.weight(m)}; }

    double phi(double x, MValues mv) const { return g_.value(x) * mv.F + c_; }
    double phi_x(double x, MValues mv) const { return g_.d1(x) * mv.F; }
    double phi_xx(double x, MValues mv) const { return g_.d2(x) * mv.F; }
    double dphi_dm_weight(double x, MValues mv) const { return g_.value(x) * mv.weight; }

    double phi(double x, const GridFunction& m) const { return phi(x, prep(m)); }
    double phi_x(double x, const GridFunction& m) const { return phi_x(x, prep(m)); }
    double phi_xx(double x, const GridFunction& m) const { return phi_xx(x, prep(m)); }
    GridFunction dphi_dm(double x, const GridFunction& m) const {
        GridFunction d = F_.h();
        d *= dphi_dm_weight(x, prep(m));
        return d;
    }

    /// Profile of the m-derivative: dphi_dm(x,m) = dphi_dm_weight(x,m) * dm_profile().
    const GridFunction& dm_profile() const { return F_.h(); }
    const Profile& g() const { return g_; }
    const SmoothFunctional& F() const { return F_; }
    double offset() const { return c_; }

    /// Bound constant for the assumption checks (infinite for unbounded g).
    double l_phi() const {
        const double fb = F_.value_bound();
        double l = g_.sup_abs() * fb + std::abs(c_);
        l = std::max(l, g_.sup_d1() * fb);
        l = std::max(l, g_.sup_d2() * fb);
        l = std::max(l, g_.sup_abs() * F_.derivative_bound_l2());
        return l;
    }

private:
    Profile g_;
    SmoothFunctional F_;
    double c_;
};

struct McConfig {
    double T = 1.0;
    int n_steps = 100;
    int n_paths = 1000;
    std::uint64_t seed = 1;
    int picard_iters = 0;
    double picard_tol = 1e-10;
    int threads = 0;
    int kernel_snapshot_every = 1;

    FpConfig fp_config() const { return FpConfig{n_steps, picard_iters, picard_tol}; }
};

/// Density flow plus (optionally) the kernel machinery for one (t, mu).
/// Addresses into `m` are taken at construction, so the bundle is pinned.
class FlowBundle {
public:
    FlowBundle(const CoefficientModel& model, DensityPath path, bool with_kernel,
               const KernelOptions& kopts = {})
        : m_(std::move(path)), prepared_(prepare_flow_inputs(model, m_)) {
        if (with_kernel) {
            KernelPath f = solve_fundamental(model, m_, kopts);
            KernelPath g = solve_correction(model, m_, f, kopts);
            kernel_.emplace(assemble_kernel(f, g));
        }
    }
    FlowBundle(const FlowBundle&) = delete;
    FlowBundle& operator=(const FlowBundle&) = delete;

    const DensityPath& m() const { return m_; }
    const PreparedFlow& prepared() const { return prepared_; }
    bool has_kernel() const { return kernel_.has_value(); }
    const KernelPath& kernel() const { return *kernel_; }

private:
    DensityPath m_;
    PreparedFlow prepared_;
    std::optional<KernelPath> kernel_;
};

inline std::unique_ptr<FlowBundle> make_flow_bundle(const CoefficientModel& model,
                                                    const GridFunction& mu, double t,
                                                    const McConfig& cfg, bool with_kernel) {
    KernelOptions kopts;
    kopts.snapshot_every = cfg.kernel_snapshot_every;
    kopts.threads = cfg.threads;
    return std::make_unique<FlowBundle>(model, solve_fp(model, mu, t, cfg.T, cfg.fp_config()),
                                        with_kernel, kopts);
}

/// Spatial right-hand side of the FP equation at slice j:
/// d^2/dx^2 [a m] - d/dx [b m], the dm/ds used by the time-derivative and
/// Ito formulas (no time differencing at the endpoint).
inline GridFunction fp_time_derivative(const CoefficientModel& model, const DensityPath& m_path,
                                       int j) {
    const Grid1D& g = m_path.grid();
    const GridFunction& m = m_path.slice(j);
    const auto in = model.functionals(m);
    GridFunction am(g), bm(g);
    for (int i = 0; i < g.n_points(); ++i) {
        am[i] = model.a(g.node(i), in) * m[i];
        bm[i] = model.b(g.node(i), in) * m[i];
    }
    GridFunction rhs = spatial_derivative(am, 2);
    rhs -= spatial_derivative(bm, 1);
    return rhs;
}

/// Per-path samples of every scalar the value-function formulas need,
/// produced by one fused walk of (X, dX, d2X) under shared noise.
struct ValueSamples {
    std::vector<double> x_T;   // X_T
    std::vector<double> phi;   // Phi(X_T, m_T)
    std::vector<double> vx;    // Phi_x dX_T
    std::vector<double> vxx;   // Phi_xx (dX_T)^2 + Phi_x d2X_T
    std::vector<double> vt;    // b Phi_x + a Phi_xx + <dPhi/dm, dm/ds(T)>
    std::vector<std::uint8_t> escaped;
    TerminalFunctional::MValues mv;
    double ms_pairing = 0.0;   // <h_Phi, dm/ds(T,.)>
    int n_escaped = 0;
};

inline ValueSamples value_samples(const CoefficientModel& model, const TerminalFunctional& Phi,
                                  double x, const FlowBundle& fb, const NoiseBank& noise,
                                  int threads) {
    const DensityPath& m_path = fb.m();
    const PreparedFlow& flow = fb.prepared();
    const Grid1D& g = m_path.grid();
    const int n_steps = m_path.n_steps();
    const int np = noise.n_paths();
    const double dt = m_path.dt();

    ValueSamples s;
    s.mv = Phi.prep(m_path.slice(n_steps));
    s.ms_pairing = l2_inner(Phi.dm_profile(), fp_time_derivative(model, m_path, n_steps));
    s.x_T.assign(static_cast<std::size_t>(np), 0.0);
    s.phi.assign(static_cast<std::size_t>(np), 0.0);
    s.vx.assign(static_cast<std::size_t>(np), 0.0);
    s.vxx.assign(static_cast<std::size_t>(np), 0.0);
    s.vt.assign(static_cast<std::size_t>(np), 0.0);
    s.escaped.assign(static_cast<std::size_t>(np), 0);

    const auto in_T = flow.inputs[static_cast<std::size_t>(n_steps)];
    for_each_block(np, threads, [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            detail::XWalk xw{x};
            double dx = 1.0, d2x = 0.0;
            for (int j = 0; j < n_steps; ++j) {
                if (xw.escaped) break;
                const auto in = flow.inputs[static_cast<std::size_t>(j)];
                const double dB = noise.increment(static_cast<int>(p), j);
                const double bx = model.b_x(xw.x, in), sx = model.sigma_x(xw.x, in);
                d2x += (bx * d2x + model.b_xx(xw.x, in) * dx * dx) * dt +
                       (sx * d2x + model.sigma_xx(xw.x, in) * dx * dx) * dB;
                dx += bx * dx * dt + sx * dx * dB;
                xw.advance(model, in, dt, dB, g.x_min(), g.x_max());
            }
            const auto k = static_cast<std::size_t>(p);
            s.escaped[k] = xw.escaped ? 1 : 0;
            s.x_T[k] = xw.x;
            const double px = Phi.phi_x(xw.x, s.mv);
            const double pxx = Phi.phi_xx(xw.x, s.mv);
            s.phi[k] = Phi.phi(xw.x, s.mv);
            s.vx[k] = px * dx;
            s.vxx[k] = pxx * dx * dx + px * d2x;
            s.vt[k] = model.b(xw.x, in_T) * px + model.a(xw.x, in_T) * pxx +
                      Phi.dphi_dm_weight(xw.x, s.mv) * s.ms_pairing;
        }
    });
    for (std::uint8_t e : s.escaped) s.n_escaped += e;
    if (s.n_escaped > 0.01 * np)
        throw numerical_error("value_samples: too many escaped paths");
    return s;
}

inline MeanStdErr reduce_surviving(const std::vector<double>& v,
                                   const std::vector<std::uint8_t>& escaped) {
    std::vector<double> kept;
    kept.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        if (escaped[i] == 0) kept.push_back(v[i]);
    return mean_std_err(kept);
}

struct ValueReport {
    double v = 0.0, v_std_err = 0.0;
    double dv_dx = 0.0, dv_dx_std_err = 0.0;
    double d2v_dx2 = 0.0, d2v_dx2_std_err = 0.0;
    double dv_dt = 0.0, dv_dt_std_err = 0.0;
    GridFunction dv_dmu;
    bool has_dmu = false;
    int n_paths = 0, n_steps = 0, n_escaped = 0;
    std::uint64_t seed = 0;

    ValueReport(const Grid1D& g) : dv_dmu(g) {}
};

/// Full-kernel functional derivative dV/dmu(t,x,mu)(y); requires the kernel.
inline GridFunction dv_dmu_from_bundle(const CoefficientModel& model,
                                       const TerminalFunctional& Phi, double x,
                                       const FlowBundle& fb, const ValueSamples& samples,
                                       const NoiseBank& noise, int threads) {
    if (!fb.has_kernel())
        throw unsupported_model_error(
            "dv_dmu: pointwise dV/dmu needs the kernel representation, which is only "
            "available for state-invariant models; use dv_dmu_pairing for directions");
    const DensityPath& m_path = fb.m();
    // E[Phi_x(X_T) U_T(y)] via the weighted U-walk under the same noise
    PathEnsemble x_meta(ProcessLabel::X, noise, m_path.t0(), m_path.t1(), m_path.n_steps(), x);
    URequest req;
    const auto mv = samples.mv;
    req.terminal_weight = [&Phi, mv](double xT) { return Phi.phi_x(xT, mv); };
    SimOptions opts;
    opts.threads = threads;
    KernelEnsemble ue = simulate_u(model, fb.prepared(), fb.kernel(), x_meta, req, opts);
    GridFunction out = ue.weighted_mean;

    // E[ Int dPhi/dm(X_T, m_T)(xi) k(T, xi, y) dxi ]
    //   = mean dphi-weight * (k(T)^T h_Phi)(y)
    const MeanStdErr wbar = [&] {
        std::vector<double> w(samples.x_T.size());
        for (std::size_t p = 0; p < w.size(); ++p)
            w[p] = Phi.dphi_dm_weight(samples.x_T[p], mv);
        return reduce_surviving(w, samples.escaped);
    }();
    GridFunction ktf = kernel_test_function(fb.kernel(), Phi.dm_profile(), m_path.t1());
    ktf *= wbar.mean;
    out += ktf;
    return out;
}

/// V, V_x, V_xx, dV/dt and (when the kernel is available) dV/dmu in one pass.
inline ValueReport value_report(const CoefficientModel& model, const TerminalFunctional& Phi,
                                double t, double x, const GridFunction& mu, const McConfig& cfg,
                                bool want_dmu = true) {
    const auto fb = make_flow_bundle(model, mu, t, cfg, want_dmu && model.state_invariant());
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());
    const ValueSamples s = value_samples(model, Phi, x, *fb, noise, cfg.threads);

    ValueReport rep(mu.grid());
    rep.n_paths = cfg.n_paths;
    rep.n_steps = cfg.n_steps;
    rep.n_escaped = s.n_escaped;
    rep.seed = cfg.seed;
    const MeanStdErr v = reduce_surviving(s.phi, s.escaped);
    const MeanStdErr vx = reduce_surviving(s.vx, s.escaped);
    const MeanStdErr vxx = reduce_surviving(s.vxx, s.escaped);
    const MeanStdErr vt = reduce_surviving(s.vt, s.escaped);
    rep.v = v.mean;
    rep.v_std_err = v.std_err;
    rep.dv_dx = vx.mean;
    rep.dv_dx_std_err = vx.std_err;
    rep.d2v_dx2 = vxx.mean;
    rep.d2v_dx2_std_err = vxx.std_err;
    rep.dv_dt = -vt.mean;
    rep.dv_dt_std_err = vt.std_err;
    if (fb->has_kernel()) {
        rep.dv_dmu = dv_dmu_from_bundle(model, Phi, x, *fb, s, noise, cfg.threads);
        rep.has_dmu = true;
    }
    return rep;
}

/// V(t,x,mu) = E[Phi(X_T, m(T,.))] with its Monte-Carlo standard error.
/// t == T needs no simulation and is exact.
inline ValueReport eval_v(const CoefficientModel& model, const TerminalFunctional& Phi, double t,
                          double x, const GridFunction& mu, const McConfig& cfg) {
    ValueReport rep(mu.grid());
    rep.seed = cfg.seed;
    if (t == cfg.T) {
        rep.v = Phi.phi(x, mu);
        return rep;
    }
    const auto fb = make_flow_bundle(model, mu, t, cfg, false);
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());
    const ValueSamples s = value_samples(model, Phi, x, *fb, noise, cfg.threads);
    const MeanStdErr v = reduce_surviving(s.phi, s.escaped);
    rep.v = v.mean;
    rep.v_std_err = v.std_err;
    rep.n_paths = cfg.n_paths;
    rep.n_steps = cfg.n_steps;
    rep.n_escaped = s.n_escaped;
    return rep;
}

/// (V_x, V_xx) from the variational-process representation.
inline std::pair<MeanStdErr, MeanStdErr> dv_dx(const CoefficientModel& model,
                                               const TerminalFunctional& Phi, double t, double x,
                                               const GridFunction& mu, const McConfig& cfg) {
    const auto fb = make_flow_bundle(model, mu, t, cfg, false);
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());
    const ValueSamples s = value_samples(model, Phi, x, *fb, noise, cfg.threads);
    return {reduce_surviving(s.vx, s.escaped), reduce_surviving(s.vxx, s.escaped)};
}

/// dV/dt from the terminal representation (no time differencing).
inline MeanStdErr dv_dt(const CoefficientModel& model, const TerminalFunctional& Phi, double t,
                        double x, const GridFunction& mu, const McConfig& cfg) {
    const auto fb = make_flow_bundle(model, mu, t, cfg, false);
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());
    const ValueSamples s = value_samples(model, Phi, x, *fb, noise, cfg.threads);
    MeanStdErr r = reduce_surviving(s.vt, s.escaped);
    r.mean = -r.mean;
    return r;
}

/// Pointwise dV/dmu(t,x,mu)(y); throws unsupported_model_error when the
/// model is not state-invariant (see dv_dmu_pairing for the degraded mode).
inline GridFunction dv_dmu(const CoefficientModel& model, const TerminalFunctional& Phi, double t,
                           double x, const GridFunction& mu, const McConfig& cfg) {
    if (!model.state_invariant())
        throw unsupported_model_error(
            "dv_dmu: model has state-dependent coefficients, the kernel form of dV/dmu is "
            "unavailable; pair directions with dv_dmu_pairing instead");
    const auto fb = make_flow_bundle(model, mu, t, cfg, true);
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());
    const ValueSamples s = value_samples(model, Phi, x, *fb, noise, cfg.threads);
    return dv_dmu_from_bundle(model, Phi, x, *fb, s, noise, cfg.threads);
}

/// Degraded pairing mode: <dV/dmu(t,x,mu), mu_tilde> through the Y-process,
/// available for every model (x-dependent drift included).
inline MeanStdErr dv_dmu_pairing(const CoefficientModel& model, const TerminalFunctional& Phi,
                                 double t, double x, const GridFunction& mu,
                                 const GridFunction& mu_tilde, const McConfig& cfg) {
    const auto fb = make_flow_bundle(model, mu, t, cfg, false);
    const DensityPath mt = solve_directional(model, fb->m(), mu_tilde, cfg.fp_config());
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());

    const Grid1D& g = mu.grid();
    const int n_steps = fb->m().n_steps();
    const double dt = fb->m().dt();
    const auto mv = Phi.prep(fb->m().slice(n_steps));
    const double mt_pair_T = l2_inner(Phi.dm_profile(), mt.slice(n_steps));
    const PreparedFlow& flow = fb->prepared();

    const auto cache = model.cache_for(g);
    std::vector<double> tb(static_cast<std::size_t>(n_steps) + 1), ts(tb.size());
    for (int j = 0; j <= n_steps; ++j) {
        tb[static_cast<std::size_t>(j)] = l2_inner(cache.hb, mt.slice(j));
        ts[static_cast<std::size_t>(j)] = l2_inner(cache.hs, mt.slice(j));
    }

    std::vector<double> z(static_cast<std::size_t>(cfg.n_paths));
    std::vector<std::uint8_t> esc(static_cast<std::size_t>(cfg.n_paths), 0);
    for_each_block(cfg.n_paths, cfg.threads, [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            detail::XWalk xw{x};
            double y = 0.0;
            for (int j = 0; j < n_steps; ++j) {
                if (xw.escaped) break;
                const auto in = flow.inputs[static_cast<std::size_t>(j)];
                const double dB = noise.increment(static_cast<int>(p), j);
                y += (model.b_x(xw.x, in) * y +
                      model.db_dm_weight(xw.x, in) * tb[static_cast<std::size_t>(j)]) * dt +
                     (model.sigma_x(xw.x, in) * y +
                      model.dsigma_dm_weight(xw.x, in) * ts[static_cast<std::size_t>(j)]) * dB;
                xw.advance(model, in, dt, dB, g.x_min(), g.x_max());
            }
            esc[static_cast<std::size_t>(p)] = xw.escaped ? 1 : 0;
            z[static_cast<std::size_t>(p)] = Phi.phi_x(xw.x, mv) * y +
                                             Phi.dphi_dm_weight(xw.x, mv) * mt_pair_T;
        }
    });
    return reduce_surviving(z, esc);
}

} // namespace mfsde
