#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mfsde/scenario.hpp"
#include "mfsde/value_function.hpp"

namespace mfsde {

/// Master-PDE residual at (t, x, mu): the four terms of the nonlocal value
/// equation assembled from independent estimators; the continuum limit
/// cancels exactly, so what remains is discretization error plus
/// Monte-Carlo noise.
struct ResidualReport {
    double residual = 0.0;
    double term_dt = 0.0, term_x = 0.0, term_xx = 0.0, term_mu = 0.0;
    double mc_std_err = 0.0;  // standard error of the combined per-path residual
    double c_est = 0.0;       // stated discretization constant
    double dt = 0.0, dx = 0.0;
    double error_budget = 0.0; // 3*mc_std_err + c_est*(dt + dx^2)
    int n_paths = 0, n_escaped = 0;

    bool pass() const { return std::abs(residual) <= error_budget; }
};

inline ResidualReport master_pde_residual(const CoefficientModel& model,
                                          const TerminalFunctional& Phi, double t, double x,
                                          const GridFunction& mu, const McConfig& cfg,
                                          double c_est) {
    if (!model.state_invariant())
        throw unsupported_model_error(
            "master_pde_residual: the model has state-dependent coefficients, so the "
            "pointwise dV/dmu needed by the mu-term is unavailable (pairing mode is not "
            "an equivalent substitute); run this check on a state-invariant model");

    const auto fb = make_flow_bundle(model, mu, t, cfg, true);
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());
    const ValueSamples s = value_samples(model, Phi, x, *fb, noise, cfg.threads);

    // the bracket d^2(a mu)/dxi^2 - d(b mu)/dxi at the initial density is the
    // FP right-hand side at slice 0
    const GridFunction bracket = fp_time_derivative(model, fb->m(), 0);

    // mu-term, per path: Phi_x(X_T) <U_T, bracket> + dphi-weight(X_T) <ktf, bracket>
    PathEnsemble x_meta(ProcessLabel::X, noise, fb->m().t0(), fb->m().t1(), fb->m().n_steps(), x);
    URequest req;
    req.directions.push_back(bracket);
    SimOptions uopts;
    uopts.threads = cfg.threads;
    const KernelEnsemble ue = simulate_u(model, fb->prepared(), fb->kernel(), x_meta, req, uopts);
    const GridFunction ktf = kernel_test_function(fb->kernel(), Phi.dm_profile(), fb->m().t1());
    const double ktf_pair = l2_inner(ktf, bracket);

    const auto in0 = model.functionals(mu);
    const double bx = model.b(x, in0);
    const double ax = model.a(x, in0);

    const std::size_t np = s.phi.size();
    std::vector<double> r(np), term_dt(np), term_x(np), term_xx(np), term_mu(np);
    for (std::size_t p = 0; p < np; ++p) {
        const double phix = Phi.phi_x(s.x_T[p], s.mv);
        const double dphiw = Phi.dphi_dm_weight(s.x_T[p], s.mv);
        term_dt[p] = -s.vt[p];
        term_x[p] = bx * s.vx[p];
        term_xx[p] = ax * s.vxx[p];
        term_mu[p] = phix * ue.pairings[0].back()[p] + dphiw * ktf_pair;
        r[p] = term_dt[p] + term_x[p] + term_xx[p] + term_mu[p];
    }
    const MeanStdErr total = reduce_surviving(r, s.escaped);

    ResidualReport rep;
    rep.term_dt = reduce_surviving(term_dt, s.escaped).mean;
    rep.term_x = reduce_surviving(term_x, s.escaped).mean;
    rep.term_xx = reduce_surviving(term_xx, s.escaped).mean;
    rep.term_mu = reduce_surviving(term_mu, s.escaped).mean;
    rep.residual = total.mean;
    rep.mc_std_err = total.std_err;
    rep.c_est = c_est;
    rep.dt = fb->m().dt();
    rep.dx = mu.grid().dx();
    rep.error_budget = 3.0 * total.std_err + c_est * (rep.dt + rep.dx * rep.dx);
    rep.n_paths = cfg.n_paths;
    rep.n_escaped = s.n_escaped;
    return rep;
}

/// |V(T,x,mu) - Phi(x,mu)|: zero by construction (no evolution happens at T).
inline double terminal_condition_check(const CoefficientModel& model,
                                       const TerminalFunctional& Phi, double x,
                                       const GridFunction& mu, const McConfig& cfg) {
    const ValueReport rep = eval_v(model, Phi, cfg.T, x, mu, cfg);
    return std::abs(rep.v - Phi.phi(x, mu));
}

struct MartingaleReport {
    std::vector<double> times;
    std::vector<double> m_s;      // nested-MC estimate of E[V(s, X_s, m_s)]
    std::vector<double> drift;    // m_s - V(t,x,mu), coupled per path
    std::vector<double> std_err;  // of the coupled drift estimator
    double v_ref = 0.0, v_ref_std_err = 0.0;
    int n_outer = 0, n_inner = 0;

    bool pass(double k = 3.0) const {
        for (std::size_t i = 0; i < drift.size(); ++i)
            if (std::abs(drift[i]) > k * std_err[i] && std_err[i] > 0.0) return false;
        return true;
    }
};

/// Nested Monte Carlo check that s -> V(s, X_s, m(s,.)) is a martingale:
/// restarts at each checkpoint state with fresh inner noise (the discrete
/// flow property makes the stored density slices the correct restart law).
inline MartingaleReport martingale_check(const CoefficientModel& model,
                                         const TerminalFunctional& Phi, double t, double x,
                                         const GridFunction& mu,
                                         const std::vector<double>& checkpoints,
                                         const McConfig& cfg) {
    const auto fb = make_flow_bundle(model, mu, t, cfg, false);
    const DensityPath& m_path = fb->m();
    const PreparedFlow& flow = fb->prepared();
    const Grid1D& g = m_path.grid();
    const double dt = m_path.dt();
    const int n_steps = m_path.n_steps();
    const int n_inner = std::max(2, static_cast<int>(std::lround(std::sqrt(cfg.n_paths))));

    std::vector<int> ck_steps;
    for (double s : checkpoints) ck_steps.push_back(m_path.index_of_time(s));
    {
        std::int64_t budget = 0;
        for (int jk : ck_steps)
            budget += static_cast<std::int64_t>(cfg.n_paths) * n_inner * (n_steps - jk);
        if (budget > static_cast<std::int64_t>(4e9))
            throw config_error("martingale_check: nested budget " + std::to_string(budget) +
                               " steps exceeds the limit; reduce paths or checkpoints");
    }

    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, dt);
    SimOptions xopts;
    xopts.threads = cfg.threads;
    xopts.checkpoint_steps = ck_steps;
    const PathEnsemble xe = simulate_x(model, flow, t, x, noise, xopts);

    const auto mv = Phi.prep(m_path.slice(n_steps));
    std::vector<double> phi_T(static_cast<std::size_t>(cfg.n_paths));
    for (int p = 0; p < cfg.n_paths; ++p)
        phi_T[static_cast<std::size_t>(p)] = Phi.phi(xe.terminal[static_cast<std::size_t>(p)], mv);
    const MeanStdErr vref = reduce_surviving(phi_T, xe.escaped);

    MartingaleReport rep;
    rep.v_ref = vref.mean;
    rep.v_ref_std_err = vref.std_err;
    rep.n_outer = cfg.n_paths;
    rep.n_inner = n_inner;

    for (std::size_t k = 0; k < ck_steps.size(); ++k) {
        const int jk = ck_steps[k];
        rep.times.push_back(m_path.time(jk));
        if (jk == 0 || jk == n_steps) {
            // degenerate checkpoints: at s = t every outer state is x, and at
            // s = T the inner estimate is Phi(X_T) identically
            rep.m_s.push_back(vref.mean);
            rep.drift.push_back(0.0);
            rep.std_err.push_back(0.0);
            continue;
        }
        std::vector<double> d(static_cast<std::size_t>(cfg.n_paths), 0.0);
        for_each_block(cfg.n_paths, cfg.threads, [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
            for (std::int64_t p = lo; p < hi; ++p) {
                if (xe.escaped[static_cast<std::size_t>(p)] != 0) continue;
                const double xs = xe.checkpoint_states[k][static_cast<std::size_t>(p)];
                const std::uint64_t inner_seed =
                    rng::derive_seed(cfg.seed, 0x696e6e6572ULL, static_cast<std::uint64_t>(k),
                                     static_cast<std::uint64_t>(p));
                double acc = 0.0;
                for (int q = 0; q < n_inner; ++q) {
                    detail::XWalk xw{xs};
                    for (int j = jk; j < n_steps; ++j) {
                        const double dB =
                            std::sqrt(dt) * rng::normal(inner_seed, static_cast<std::uint64_t>(q),
                                                        static_cast<std::uint64_t>(j));
                        xw.advance(model, flow.inputs[static_cast<std::size_t>(j)], dt, dB,
                                   g.x_min(), g.x_max());
                    }
                    acc += Phi.phi(xw.x, mv);
                }
                d[static_cast<std::size_t>(p)] =
                    acc / n_inner - phi_T[static_cast<std::size_t>(p)];
            }
        });
        const MeanStdErr drift = reduce_surviving(d, xe.escaped);
        rep.m_s.push_back(vref.mean + drift.mean);
        rep.drift.push_back(drift.mean);
        rep.std_err.push_back(drift.std_err);
    }
    return rep;
}

/// Time-weighted test functional f(s,x,m) = w(s) * [g(x) F(m) + c] for the
/// Ito-formula check; all derivatives closed-form.
struct TimeFunctional {
    Profile time_weight = Profile::constant(1.0);
    TerminalFunctional base;

    TimeFunctional(Profile w, TerminalFunctional b) : time_weight(w), base(std::move(b)) {}
};

struct ItoReport {
    double mean_residual = 0.0;
    double std_err = 0.0;
    double budget = 0.0; // 3*std_err + c_est*dt
    int n_paths = 0;

    bool pass() const { return std::abs(mean_residual) <= budget; }
};

/// E[ f(T,X_T,m_T) - f(t,x,mu) - int (df/dr + f_x b + f_xx a + <df/dmu, dm/dr>) dr ]
/// should vanish (the stochastic integral has zero mean).
inline ItoReport ito_residual(const CoefficientModel& model, const TimeFunctional& f, double t,
                              double x, const GridFunction& mu, const McConfig& cfg,
                              double c_est) {
    const auto fb = make_flow_bundle(model, mu, t, cfg, false);
    const DensityPath& m_path = fb->m();
    const PreparedFlow& flow = fb->prepared();
    const Grid1D& g = m_path.grid();
    const double dt = m_path.dt();
    const int n_steps = m_path.n_steps();

    // per-slice data: F(m_j), dF-weight, <h, dm/ds(j)>
    std::vector<TerminalFunctional::MValues> mv(static_cast<std::size_t>(n_steps) + 1);
    std::vector<double> msp(static_cast<std::size_t>(n_steps) + 1);
    for (int j = 0; j <= n_steps; ++j) {
        mv[static_cast<std::size_t>(j)] = f.base.prep(m_path.slice(j));
        msp[static_cast<std::size_t>(j)] =
            l2_inner(f.base.dm_profile(), fp_time_derivative(model, m_path, j));
    }

    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, dt);
    std::vector<double> r(static_cast<std::size_t>(cfg.n_paths), 0.0);
    std::vector<std::uint8_t> esc(static_cast<std::size_t>(cfg.n_paths), 0);
    const double f0 = f.time_weight.value(t) * f.base.phi(x, mv[0]);
    for_each_block(cfg.n_paths, cfg.threads, [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
        for (std::int64_t p = lo; p < hi; ++p) {
            detail::XWalk xw{x};
            double sum = 0.0;
            for (int j = 0; j < n_steps; ++j) {
                const double s = m_path.time(j);
                const auto in = flow.inputs[static_cast<std::size_t>(j)];
                const auto& m = mv[static_cast<std::size_t>(j)];
                const double w = f.time_weight.value(s);
                sum += dt * (f.time_weight.d1(s) * f.base.phi(xw.x, m) +
                             w * f.base.phi_x(xw.x, m) * model.b(xw.x, in) +
                             w * f.base.phi_xx(xw.x, m) * model.a(xw.x, in) +
                             w * f.base.dphi_dm_weight(xw.x, m) * msp[static_cast<std::size_t>(j)]);
                xw.advance(model, in, dt, noise.increment(static_cast<int>(p), j), g.x_min(),
                           g.x_max());
            }
            esc[static_cast<std::size_t>(p)] = xw.escaped ? 1 : 0;
            const double fT = f.time_weight.value(m_path.t1()) *
                              f.base.phi(xw.x, mv[static_cast<std::size_t>(n_steps)]);
            r[static_cast<std::size_t>(p)] = fT - f0 - sum;
        }
    });
    const MeanStdErr m = reduce_surviving(r, esc);
    ItoReport rep;
    rep.mean_residual = m.mean;
    rep.std_err = m.std_err;
    rep.budget = 3.0 * m.std_err + c_est * dt;
    rep.n_paths = cfg.n_paths;
    return rep;
}

enum class ConvergenceTarget { density_derivative, state_derivative, value_mu_pairing };

inline const char* target_name(ConvergenceTarget t) {
    switch (t) {
    case ConvergenceTarget::density_derivative: return "density_derivative";
    case ConvergenceTarget::state_derivative: return "state_derivative";
    case ConvergenceTarget::value_mu_pairing: return "value_mu_pairing";
    }
    return "?";
}

struct ConvergenceReport {
    ConvergenceTarget target;
    std::vector<double> h_values;
    std::vector<double> errors;
    std::vector<double> floors; // per-h noise floor (3 standard errors where stochastic)
    SlopeFit fit;

    bool pass(double lo = 0.7, double hi = 1.3) const {
        if (fit.floor_limited) return true; // errors at the floor: rate not measurable
        return fit.slope >= lo && fit.slope <= hi;
    }
};

/// Finite-difference convergence studies behind the O(h) derivative claims.
inline ConvergenceReport convergence_study(ConvergenceTarget target, const Scenario& sc,
                                           const std::vector<double>& h_values) {
    if (h_values.size() < 2)
        throw std::invalid_argument("convergence_study: need at least two h values");
    ConvergenceReport rep;
    rep.target = target;
    rep.h_values = h_values;

    const CoefficientModel& model = sc.model();
    const McConfig cfg = sc.mc();
    const FpConfig fpc = sc.fp();
    const GridFunction& mu = sc.mu();
    const GridFunction& dir = sc.directions().at(0);
    const DensityPath m_path = solve_fp(model, mu, sc.spec().t, cfg.T, fpc);
    const DensityPath mt = solve_directional(model, m_path, dir, fpc);

    if (target == ConvergenceTarget::density_derivative) {
        for (double h : h_values) {
            GridFunction mu_h = dir;
            mu_h *= h;
            mu_h += mu;
            const DensityPath mh = solve_fp(model, mu_h, sc.spec().t, cfg.T, fpc);
            double sup = 0.0;
            for (int j = 0; j <= m_path.n_steps(); ++j) {
                GridFunction q = mh.slice(j);
                q -= m_path.slice(j);
                q *= 1.0 / h;
                q -= mt.slice(j);
                sup = std::max(sup, l2_norm(q));
            }
            rep.errors.push_back(sup);
            rep.floors.push_back(1e-12);
        }
        rep.fit = fit_loglog_slope(rep.h_values, rep.errors, 1e-12);
        return rep;
    }

    const PreparedFlow flow = prepare_flow_inputs(model, m_path);
    const Grid1D& g = m_path.grid();
    const int n_steps = m_path.n_steps();
    const double dt = m_path.dt();
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, dt);
    const auto cache = model.cache_for(g);
    std::vector<double> tb(static_cast<std::size_t>(n_steps) + 1), ts(tb.size());
    for (int j = 0; j <= n_steps; ++j) {
        tb[static_cast<std::size_t>(j)] = l2_inner(cache.hb, mt.slice(j));
        ts[static_cast<std::size_t>(j)] = l2_inner(cache.hs, mt.slice(j));
    }

    for (double h : h_values) {
        GridFunction mu_h = dir;
        mu_h *= h;
        mu_h += mu;
        const DensityPath mh_path = solve_fp(model, mu_h, sc.spec().t, cfg.T, fpc);
        const PreparedFlow flow_h = prepare_flow_inputs(model, mh_path);

        if (target == ConvergenceTarget::state_derivative) {
            // E[sup_s |(X^h - X)/h - Y|^2] under common noise
            std::vector<double> sup2(static_cast<std::size_t>(cfg.n_paths), 0.0);
            std::vector<std::uint8_t> esc(static_cast<std::size_t>(cfg.n_paths), 0);
            for_each_block(cfg.n_paths, cfg.threads,
                           [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
                for (std::int64_t p = lo; p < hi; ++p) {
                    detail::XWalk xw{sc.spec().x0}, xh{sc.spec().x0};
                    double y = 0.0, sup = 0.0;
                    for (int j = 0; j < n_steps; ++j) {
                        if (xw.escaped || xh.escaped) break;
                        const auto in = flow.inputs[static_cast<std::size_t>(j)];
                        const auto inh = flow_h.inputs[static_cast<std::size_t>(j)];
                        const double dB = noise.increment(static_cast<int>(p), j);
                        y += (model.b_x(xw.x, in) * y +
                              model.db_dm_weight(xw.x, in) * tb[static_cast<std::size_t>(j)]) * dt +
                             (model.sigma_x(xw.x, in) * y +
                              model.dsigma_dm_weight(xw.x, in) * ts[static_cast<std::size_t>(j)]) * dB;
                        xw.advance(model, in, dt, dB, g.x_min(), g.x_max());
                        xh.advance(model, inh, dt, dB, g.x_min(), g.x_max());
                        sup = std::max(sup, std::abs((xh.x - xw.x) / h - y));
                    }
                    sup2[static_cast<std::size_t>(p)] = sup * sup;
                    esc[static_cast<std::size_t>(p)] = (xw.escaped || xh.escaped) ? 1 : 0;
                }
            });
            const MeanStdErr m2 = reduce_surviving(sup2, esc);
            rep.errors.push_back(std::sqrt(m2.mean));
            rep.floors.push_back(1e-10);
        } else { // value_mu_pairing
            const auto mvT = sc.phi().prep(m_path.slice(n_steps));
            const auto mvT_h = sc.phi().prep(mh_path.slice(n_steps));
            const double mt_pair = l2_inner(sc.phi().dm_profile(), mt.slice(n_steps));
            std::vector<double> d(static_cast<std::size_t>(cfg.n_paths), 0.0);
            std::vector<std::uint8_t> esc(static_cast<std::size_t>(cfg.n_paths), 0);
            for_each_block(cfg.n_paths, cfg.threads,
                           [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
                for (std::int64_t p = lo; p < hi; ++p) {
                    detail::XWalk xw{sc.spec().x0}, xh{sc.spec().x0};
                    double y = 0.0;
                    for (int j = 0; j < n_steps; ++j) {
                        if (xw.escaped || xh.escaped) break;
                        const auto in = flow.inputs[static_cast<std::size_t>(j)];
                        const auto inh = flow_h.inputs[static_cast<std::size_t>(j)];
                        const double dB = noise.increment(static_cast<int>(p), j);
                        y += (model.b_x(xw.x, in) * y +
                              model.db_dm_weight(xw.x, in) * tb[static_cast<std::size_t>(j)]) * dt +
                             (model.sigma_x(xw.x, in) * y +
                              model.dsigma_dm_weight(xw.x, in) * ts[static_cast<std::size_t>(j)]) * dB;
                        xw.advance(model, in, dt, dB, g.x_min(), g.x_max());
                        xh.advance(model, inh, dt, dB, g.x_min(), g.x_max());
                    }
                    const double quot = (sc.phi().phi(xh.x, mvT_h) - sc.phi().phi(xw.x, mvT)) / h;
                    const double pair = sc.phi().phi_x(xw.x, mvT) * y +
                                        sc.phi().dphi_dm_weight(xw.x, mvT) * mt_pair;
                    d[static_cast<std::size_t>(p)] = quot - pair;
                    esc[static_cast<std::size_t>(p)] = (xw.escaped || xh.escaped) ? 1 : 0;
                }
            });
            const MeanStdErr dm = reduce_surviving(d, esc);
            rep.errors.push_back(std::abs(dm.mean));
            rep.floors.push_back(3.0 * dm.std_err);
        }
    }
    // points at their (stochastic) noise floor cannot witness the rate
    double floor = 0.0;
    for (std::size_t i = 0; i < rep.errors.size(); ++i) floor = std::max(floor, rep.floors[i]);
    rep.fit = fit_loglog_slope(rep.h_values, rep.errors, std::max(floor, 1e-12));
    return rep;
}

} // namespace mfsde
