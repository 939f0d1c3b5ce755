#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfsde/coefficients.hpp"
#include "mfsde/grid.hpp"
#include "mfsde/kernel_flow.hpp"
#include "mfsde/parallel.hpp"
#include "mfsde/rng.hpp"

namespace mfsde {

enum class ProcessLabel { X, DX, D2X, Y, U };

inline const char* label_name(ProcessLabel l) {
    switch (l) {
    case ProcessLabel::X: return "X";
    case ProcessLabel::DX: return "DX";
    case ProcessLabel::D2X: return "D2X";
    case ProcessLabel::Y: return "Y";
    case ProcessLabel::U: return "U";
    }
    return "?";
}

struct SimOptions {
    std::vector<int> checkpoint_steps; // ensemble slices to retain
    bool keep_full = false;            // store every step of every path
    bool track_moments = false;        // per-step mean/variance
    int threads = 0;
    double escape_error_fraction = 0.01;
};

/// Per-slice functional coordinates of a density path, evaluated once.
struct PreparedFlow {
    const DensityPath* m = nullptr;
    std::vector<CoefficientModel::Inputs> inputs;
};

inline PreparedFlow prepare_flow_inputs(const CoefficientModel& model, const DensityPath& m_path) {
    PreparedFlow p;
    p.m = &m_path;
    const auto cache = model.cache_for(m_path.grid());
    p.inputs.reserve(static_cast<std::size_t>(m_path.n_steps()) + 1);
    for (int j = 0; j <= m_path.n_steps(); ++j)
        p.inputs.push_back(model.functionals(cache, m_path.slice(j)));
    return p;
}

/// Monte-Carlo trajectories of one scalar process. Full per-step storage is
/// opt-in; by default only terminal values, per-path sups and the requested
/// checkpoint slices are kept, and derivative simulations re-walk the state
/// from the shared noise instead of reading stored paths.
class PathEnsemble {
public:
    PathEnsemble(ProcessLabel label, const NoiseBank& noise, double t0, double t1, int n_steps,
                 double init_value)
        : label_(label), noise_(noise), t0_(t0), t1_(t1), n_steps_(n_steps),
          init_value_(init_value) {}

    ProcessLabel label() const { return label_; }
    const NoiseBank& noise() const { return noise_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    int n_steps() const { return n_steps_; }
    int n_paths() const { return noise_.n_paths(); }
    double dt() const { return (t1_ - t0_) / n_steps_; }
    double init_value() const { return init_value_; }

    std::vector<double> terminal;              // [path]
    std::vector<double> sup_abs;               // [path]
    std::vector<std::uint8_t> escaped;         // [path]
    int n_escaped = 0;
    std::vector<int> checkpoint_steps;
    std::vector<std::vector<double>> checkpoint_states; // [checkpoint][path]
    std::vector<double> step_mean, step_var;   // when track_moments
    std::vector<double> full;                  // when keep_full: [path*(n_steps+1)+j]
    bool keep_full = false;

    double full_at(int p, int j) const {
        return full[static_cast<std::size_t>(p) * static_cast<std::size_t>(n_steps_ + 1) +
                    static_cast<std::size_t>(j)];
    }

private:
    ProcessLabel label_;
    NoiseBank noise_;
    double t0_, t1_;
    int n_steps_;
    double init_value_;
};

namespace detail {

/// State recursion shared by every simulator: Euler-Maruyama on the
/// density-dependent SDE, frozen to 'escaped' once the path leaves the
/// truncated domain.
struct XWalk {
    double x;
    bool escaped = false;

    void advance(const CoefficientModel& model, CoefficientModel::Inputs in, double dt, double dB,
                 double lo, double hi) {
        if (escaped) return;
        x += model.b(x, in) * dt + model.sigma(x, in) * dB;
        if (!(x >= lo && x <= hi)) escaped = true;
    }
};

/// Runs make_walker(p) over all paths; Walker exposes value(), escaped() and
/// advance(j). Reductions are per fixed-size block and merged in block order,
/// so results do not depend on the thread count.
template <class WalkerFactory>
PathEnsemble run_paths(ProcessLabel label, const NoiseBank& noise, double t0, double t1,
                       int n_steps, double init_value, const SimOptions& opts,
                       WalkerFactory&& make_walker) {
    PathEnsemble ens(label, noise, t0, t1, n_steps, init_value);
    const int np = noise.n_paths();
    ens.terminal.assign(static_cast<std::size_t>(np), 0.0);
    ens.sup_abs.assign(static_cast<std::size_t>(np), 0.0);
    ens.escaped.assign(static_cast<std::size_t>(np), 0);
    ens.checkpoint_steps = opts.checkpoint_steps;
    for (std::size_t k = 0; k < ens.checkpoint_steps.size(); ++k)
        ens.checkpoint_states.emplace_back(static_cast<std::size_t>(np), 0.0);
    ens.keep_full = opts.keep_full;
    if (opts.keep_full)
        ens.full.assign(static_cast<std::size_t>(np) * static_cast<std::size_t>(n_steps + 1), 0.0);

    std::vector<int> ck_of_step(static_cast<std::size_t>(n_steps + 1), -1);
    for (std::size_t k = 0; k < ens.checkpoint_steps.size(); ++k) {
        const int j = ens.checkpoint_steps[k];
        if (j < 0 || j > n_steps)
            throw std::invalid_argument("simulate: checkpoint step off the mesh");
        ck_of_step[static_cast<std::size_t>(j)] = static_cast<int>(k);
    }

    const std::int64_t block = 1024;
    const std::int64_t n_blocks = (np + block - 1) / block;
    std::vector<double> part_sum, part_sq;
    if (opts.track_moments) {
        part_sum.assign(static_cast<std::size_t>(n_blocks) * static_cast<std::size_t>(n_steps + 1), 0.0);
        part_sq.assign(part_sum.size(), 0.0);
    }

    for_each_block(np, opts.threads, [&](std::int64_t blk, std::int64_t lo, std::int64_t hi) {
        double* bsum = opts.track_moments
                           ? part_sum.data() + static_cast<std::size_t>(blk) * static_cast<std::size_t>(n_steps + 1)
                           : nullptr;
        double* bsq = opts.track_moments
                          ? part_sq.data() + static_cast<std::size_t>(blk) * static_cast<std::size_t>(n_steps + 1)
                          : nullptr;
        for (std::int64_t p = lo; p < hi; ++p) {
            auto w = make_walker(static_cast<int>(p));
            double sup = std::abs(w.value());
            auto record = [&](int j, double v) {
                if (bsum != nullptr) {
                    bsum[j] += v;
                    bsq[j] += v * v;
                }
                if (ck_of_step[static_cast<std::size_t>(j)] >= 0)
                    ens.checkpoint_states[static_cast<std::size_t>(ck_of_step[static_cast<std::size_t>(j)])]
                                         [static_cast<std::size_t>(p)] = v;
                if (ens.keep_full)
                    ens.full[static_cast<std::size_t>(p) * static_cast<std::size_t>(n_steps + 1) +
                             static_cast<std::size_t>(j)] = v;
            };
            record(0, w.value());
            for (int j = 0; j < n_steps; ++j) {
                w.advance(j);
                sup = std::max(sup, std::abs(w.value()));
                record(j + 1, w.value());
            }
            ens.terminal[static_cast<std::size_t>(p)] = w.value();
            ens.sup_abs[static_cast<std::size_t>(p)] = sup;
            ens.escaped[static_cast<std::size_t>(p)] = w.escaped() ? 1 : 0;
        }
    }, block);

    for (std::uint8_t e : ens.escaped) ens.n_escaped += e;
    if (ens.n_escaped > opts.escape_error_fraction * np)
        throw numerical_error("simulate: " + std::to_string(ens.n_escaped) + " of " +
                              std::to_string(np) +
                              " paths left the truncated domain; enlarge it");
    if (opts.track_moments) {
        ens.step_mean.assign(static_cast<std::size_t>(n_steps + 1), 0.0);
        ens.step_var.assign(static_cast<std::size_t>(n_steps + 1), 0.0);
        for (std::int64_t b = 0; b < n_blocks; ++b)
            for (int j = 0; j <= n_steps; ++j) {
                ens.step_mean[static_cast<std::size_t>(j)] +=
                    part_sum[static_cast<std::size_t>(b) * static_cast<std::size_t>(n_steps + 1) +
                             static_cast<std::size_t>(j)];
                ens.step_var[static_cast<std::size_t>(j)] +=
                    part_sq[static_cast<std::size_t>(b) * static_cast<std::size_t>(n_steps + 1) +
                            static_cast<std::size_t>(j)];
            }
        for (int j = 0; j <= n_steps; ++j) {
            const double m = ens.step_mean[static_cast<std::size_t>(j)] / np;
            ens.step_mean[static_cast<std::size_t>(j)] = m;
            ens.step_var[static_cast<std::size_t>(j)] =
                std::max(0.0, ens.step_var[static_cast<std::size_t>(j)] / np - m * m);
        }
    }
    return ens;
}

inline void require_sim_mesh(const PreparedFlow& flow, const NoiseBank& noise, double t) {
    if (std::abs(flow.m->dt() - noise.dt()) > 1e-12 * (1.0 + std::abs(noise.dt())) ||
        flow.m->n_steps() != noise.n_steps())
        throw std::invalid_argument("simulate: noise mesh does not match the density path");
    if (std::abs(t - flow.m->t0()) > 1e-12 * (1.0 + std::abs(t)))
        throw std::invalid_argument("simulate: start time does not match the density path");
}

} // namespace detail

/// Euler-Maruyama ensemble of the state process from (t, x).
inline PathEnsemble simulate_x(const CoefficientModel& model, const PreparedFlow& flow, double t,
                               double x, const NoiseBank& noise, const SimOptions& opts = {}) {
    detail::require_sim_mesh(flow, noise, t);
    const Grid1D& g = flow.m->grid();
    const double dt = noise.dt();
    struct Walker {
        const CoefficientModel* model;
        const PreparedFlow* flow;
        const NoiseBank* noise;
        int p;
        double dt, lo, hi;
        detail::XWalk xw;
        double value() const { return xw.x; }
        bool escaped() const { return xw.escaped; }
        void advance(int j) {
            xw.advance(*model, flow->inputs[static_cast<std::size_t>(j)], dt,
                       noise->increment(p, j), lo, hi);
        }
    };
    return detail::run_paths(ProcessLabel::X, noise, flow.m->t0(), flow.m->t1(),
                             flow.m->n_steps(), x, opts, [&](int p) {
                                 return Walker{&model, &flow, &noise, p, dt, g.x_min(), g.x_max(),
                                               detail::XWalk{x}};
                             });
}

inline PathEnsemble simulate_x(const CoefficientModel& model, const DensityPath& m_path, double t,
                               double x, const NoiseBank& noise, const SimOptions& opts = {}) {
    return simulate_x(model, prepare_flow_inputs(model, m_path), t, x, noise, opts);
}

/// First variation dX/dx along the state (initial value 1); the state path is
/// re-walked from the ensemble's noise.
inline PathEnsemble simulate_first_variation(const CoefficientModel& model,
                                             const PreparedFlow& flow,
                                             const PathEnsemble& x_ens,
                                             const SimOptions& opts = {}) {
    detail::require_sim_mesh(flow, x_ens.noise(), x_ens.t0());
    const Grid1D& g = flow.m->grid();
    const double dt = x_ens.dt();
    const double x0 = x_ens.init_value();
    struct Walker {
        const CoefficientModel* model;
        const PreparedFlow* flow;
        const NoiseBank* noise;
        int p;
        double dt, lo, hi;
        detail::XWalk xw;
        double dx;
        double value() const { return dx; }
        bool escaped() const { return xw.escaped; }
        void advance(int j) {
            if (xw.escaped) return;
            const auto in = flow->inputs[static_cast<std::size_t>(j)];
            const double dB = noise->increment(p, j);
            dx += model->b_x(xw.x, in) * dx * dt + model->sigma_x(xw.x, in) * dx * dB;
            xw.advance(*model, in, dt, dB, lo, hi);
        }
    };
    return detail::run_paths(ProcessLabel::DX, x_ens.noise(), x_ens.t0(), x_ens.t1(),
                             x_ens.n_steps(), 1.0, opts, [&](int p) {
                                 return Walker{&model, &flow,    &x_ens.noise(), p, dt,
                                               g.x_min(), g.x_max(), detail::XWalk{x0}, 1.0};
                             });
}

/// Second variation d^2X/dx^2 (initial value 0).
inline PathEnsemble simulate_second_variation(const CoefficientModel& model,
                                              const PreparedFlow& flow,
                                              const PathEnsemble& x_ens,
                                              const PathEnsemble& dx_ens,
                                              const SimOptions& opts = {}) {
    detail::require_sim_mesh(flow, x_ens.noise(), x_ens.t0());
    if (dx_ens.noise().seed() != x_ens.noise().seed())
        throw std::invalid_argument("simulate_second_variation: ensembles use different noise");
    const Grid1D& g = flow.m->grid();
    const double dt = x_ens.dt();
    const double x0 = x_ens.init_value();
    struct Walker {
        const CoefficientModel* model;
        const PreparedFlow* flow;
        const NoiseBank* noise;
        int p;
        double dt, lo, hi;
        detail::XWalk xw;
        double dx, d2x;
        double value() const { return d2x; }
        bool escaped() const { return xw.escaped; }
        void advance(int j) {
            if (xw.escaped) return;
            const auto in = flow->inputs[static_cast<std::size_t>(j)];
            const double dB = noise->increment(p, j);
            const double bx = model->b_x(xw.x, in), sx = model->sigma_x(xw.x, in);
            d2x += (bx * d2x + model->b_xx(xw.x, in) * dx * dx) * dt +
                   (sx * d2x + model->sigma_xx(xw.x, in) * dx * dx) * dB;
            dx += bx * dx * dt + sx * dx * dB;
            xw.advance(*model, in, dt, dB, lo, hi);
        }
    };
    return detail::run_paths(ProcessLabel::D2X, x_ens.noise(), x_ens.t0(), x_ens.t1(),
                             x_ens.n_steps(), 0.0, opts, [&](int p) {
                                 return Walker{&model, &flow,    &x_ens.noise(), p,   dt,
                                               g.x_min(), g.x_max(), detail::XWalk{x0}, 1.0, 0.0};
                             });
}

/// Derivative of the state along a density direction: the Y-process driven by
/// the directional derivative path mtilde (initial value 0).
inline PathEnsemble simulate_y(const CoefficientModel& model, const PreparedFlow& flow,
                               const DensityPath& mtilde_path, const PathEnsemble& x_ens,
                               const SimOptions& opts = {}) {
    detail::require_sim_mesh(flow, x_ens.noise(), x_ens.t0());
    if (mtilde_path.grid() != flow.m->grid() || mtilde_path.n_steps() != flow.m->n_steps())
        throw std::invalid_argument("simulate_y: direction path mesh mismatch");
    const Grid1D& g = flow.m->grid();
    const double dt = x_ens.dt();
    const double x0 = x_ens.init_value();
    const int n_steps = flow.m->n_steps();

    // <h_b, mtilde_j> and <h_sigma, mtilde_j>, once per slice
    const auto cache = model.cache_for(g);
    std::vector<double> tb(static_cast<std::size_t>(n_steps) + 1), ts(tb.size());
    for (int j = 0; j <= n_steps; ++j) {
        tb[static_cast<std::size_t>(j)] = l2_inner(cache.hb, mtilde_path.slice(j));
        ts[static_cast<std::size_t>(j)] = l2_inner(cache.hs, mtilde_path.slice(j));
    }

    struct Walker {
        const CoefficientModel* model;
        const PreparedFlow* flow;
        const NoiseBank* noise;
        const std::vector<double>* tb;
        const std::vector<double>* ts;
        int p;
        double dt, lo, hi;
        detail::XWalk xw;
        double y;
        double value() const { return y; }
        bool escaped() const { return xw.escaped; }
        void advance(int j) {
            if (xw.escaped) return;
            const auto in = flow->inputs[static_cast<std::size_t>(j)];
            const double dB = noise->increment(p, j);
            y += (model->b_x(xw.x, in) * y +
                  model->db_dm_weight(xw.x, in) * (*tb)[static_cast<std::size_t>(j)]) * dt +
                 (model->sigma_x(xw.x, in) * y +
                  model->dsigma_dm_weight(xw.x, in) * (*ts)[static_cast<std::size_t>(j)]) * dB;
            xw.advance(*model, in, dt, dB, lo, hi);
        }
    };
    return detail::run_paths(ProcessLabel::Y, x_ens.noise(), x_ens.t0(), x_ens.t1(), n_steps, 0.0,
                             opts, [&](int p) {
                                 return Walker{&model, &flow, &x_ens.noise(), &tb,  &ts, p,
                                               dt,     g.x_min(),  g.x_max(),          detail::XWalk{x0}, 0.0};
                             });
}

/// What simulate_u should retain. Pairings against directions are evolved as
/// scalars (the recursion is linear in y, so pairing commutes with the step);
/// the full terminal slice per path is opt-in and memory-guarded.
struct URequest {
    std::vector<GridFunction> directions;        // pairings <U_s, mu_tilde> at checkpoints
    bool keep_terminal = false;                  // per-path U_T(y)
    std::function<double(double)> terminal_weight; // accumulate E[w(X_T) U_T(.)]
};

struct KernelEnsemble {
    int n_paths = 0;
    int n_steps = 0;
    std::vector<int> checkpoint_steps;
    // pairings[d][k][p] = <U_{s_k}, direction_d> on path p
    std::vector<std::vector<std::vector<double>>> pairings;
    std::vector<double> terminal;     // keep_terminal: [p * n_y + l]
    std::vector<double> sup_sq_integral; // Int_y sup_s U_s(y)^2 dy per path (when the field is evolved)
    GridFunction weighted_mean;       // E[w(X_T) U_T(.)] over surviving paths
    std::vector<double> weight_values; // w(X_T) per path (when weight given)
    std::vector<std::uint8_t> escaped;
    int n_escaped = 0;

    KernelEnsemble(const Grid1D& g) : weighted_mean(g) {}
};

/// Kernel-valued derivative process U(y) (zero initial condition), driven by
/// the kernel traces <db_dm, k(r,.,y)> and <dsigma_dm, k(r,.,y)>.
inline KernelEnsemble simulate_u(const CoefficientModel& model, const PreparedFlow& flow,
                                 const KernelPath& k_path, const PathEnsemble& x_ens,
                                 const URequest& req, const SimOptions& opts = {}) {
    detail::require_sim_mesh(flow, x_ens.noise(), x_ens.t0());
    if (k_path.grid() != flow.m->grid() || k_path.n_steps() != flow.m->n_steps())
        throw std::invalid_argument("simulate_u: kernel path mesh mismatch");
    const Grid1D& g = flow.m->grid();
    const int n = g.n_points();
    const int np = x_ens.n_paths();
    const int n_steps = flow.m->n_steps();
    const double dt = x_ens.dt();
    const double x0 = x_ens.init_value();
    const bool want_field = req.keep_terminal || static_cast<bool>(req.terminal_weight);
    if (req.keep_terminal &&
        static_cast<std::int64_t>(np) * n > static_cast<std::int64_t>(4e7))
        throw std::invalid_argument("simulate_u: keep_terminal exceeds the memory guard; "
                                    "use pairings or fewer paths");

    KernelEnsemble out(g);
    out.n_paths = np;
    out.n_steps = n_steps;
    out.checkpoint_steps = opts.checkpoint_steps.empty() ? std::vector<int>{n_steps}
                                                         : opts.checkpoint_steps;
    const std::size_t nck = out.checkpoint_steps.size();
    out.pairings.assign(req.directions.size(),
                        std::vector<std::vector<double>>(nck, std::vector<double>(static_cast<std::size_t>(np), 0.0)));
    out.escaped.assign(static_cast<std::size_t>(np), 0);
    if (req.keep_terminal)
        out.terminal.assign(static_cast<std::size_t>(np) * static_cast<std::size_t>(n), 0.0);
    if (want_field) out.sup_sq_integral.assign(static_cast<std::size_t>(np), 0.0);
    if (req.terminal_weight) out.weight_values.assign(static_cast<std::size_t>(np), 0.0);

    std::vector<int> ck_of_step(static_cast<std::size_t>(n_steps + 1), -1);
    for (std::size_t k = 0; k < out.checkpoint_steps.size(); ++k)
        ck_of_step[static_cast<std::size_t>(out.checkpoint_steps[k])] = static_cast<int>(k);

    // direction pairings of the traces, once per (direction, step)
    const std::size_t nd = req.directions.size();
    std::vector<double> dir_tb(nd * static_cast<std::size_t>(n_steps + 1));
    std::vector<double> dir_ts(nd * static_cast<std::size_t>(n_steps + 1));
    for (std::size_t d = 0; d < nd; ++d) {
        req.directions[d].require_same_grid(GridFunction(g));
        for (int j = 0; j <= n_steps; ++j) {
            double sb = 0.0, ss = 0.0;
            for (int l = 0; l < n; ++l) {
                const double w = quad_weight(g, l) * req.directions[d][l];
                sb += w * k_path.trace_b(j, l);
                ss += w * k_path.trace_s(j, l);
            }
            dir_tb[d * static_cast<std::size_t>(n_steps + 1) + static_cast<std::size_t>(j)] = sb;
            dir_ts[d * static_cast<std::size_t>(n_steps + 1) + static_cast<std::size_t>(j)] = ss;
        }
    }

    const std::int64_t block = 256;
    const std::int64_t n_blocks = (np + block - 1) / block;
    std::vector<double> part_weighted;
    std::vector<std::int64_t> part_count;
    if (req.terminal_weight) {
        part_weighted.assign(static_cast<std::size_t>(n_blocks) * static_cast<std::size_t>(n), 0.0);
        part_count.assign(static_cast<std::size_t>(n_blocks), 0);
    }

    for_each_block(np, opts.threads, [&](std::int64_t blk, std::int64_t lo, std::int64_t hi) {
        std::vector<double> u(want_field ? static_cast<std::size_t>(n) : 0, 0.0);
        std::vector<double> usup(u.size(), 0.0);
        std::vector<double> w_pair(nd, 0.0);
        for (std::int64_t p = lo; p < hi; ++p) {
            detail::XWalk xw{x0};
            std::fill(u.begin(), u.end(), 0.0);
            std::fill(usup.begin(), usup.end(), 0.0);
            std::fill(w_pair.begin(), w_pair.end(), 0.0);
            auto record = [&](int j) {
                const int k = ck_of_step[static_cast<std::size_t>(j)];
                if (k < 0) return;
                for (std::size_t d = 0; d < nd; ++d)
                    out.pairings[d][static_cast<std::size_t>(k)][static_cast<std::size_t>(p)] = w_pair[d];
            };
            record(0);
            for (int j = 0; j < n_steps; ++j) {
                const auto in = flow.inputs[static_cast<std::size_t>(j)];
                const double dB = x_ens.noise().increment(static_cast<int>(p), j);
                if (!xw.escaped) {
                    const double bx = model.b_x(xw.x, in), sx = model.sigma_x(xw.x, in);
                    const double wb = model.db_dm_weight(xw.x, in);
                    const double ws = model.dsigma_dm_weight(xw.x, in);
                    const double lin = 1.0 + bx * dt + sx * dB;
                    for (std::size_t d = 0; d < nd; ++d) {
                        const std::size_t at = d * static_cast<std::size_t>(n_steps + 1) +
                                               static_cast<std::size_t>(j);
                        w_pair[d] = w_pair[d] * lin + wb * dir_tb[at] * dt + ws * dir_ts[at] * dB;
                    }
                    if (want_field) {
                        for (int l = 0; l < n; ++l) {
                            const auto i = static_cast<std::size_t>(l);
                            u[i] = u[i] * lin + wb * k_path.trace_b(j, l) * dt +
                                   ws * k_path.trace_s(j, l) * dB;
                            usup[i] = std::max(usup[i], std::abs(u[i]));
                        }
                    }
                    xw.advance(model, in, dt, dB, g.x_min(), g.x_max());
                }
                record(j + 1);
            }
            out.escaped[static_cast<std::size_t>(p)] = xw.escaped ? 1 : 0;
            if (want_field) {
                double q = 0.0;
                for (int l = 0; l < n; ++l)
                    q += quad_weight(g, l) * usup[static_cast<std::size_t>(l)] *
                         usup[static_cast<std::size_t>(l)];
                out.sup_sq_integral[static_cast<std::size_t>(p)] = q;
            }
            if (req.keep_terminal)
                std::copy(u.begin(), u.end(),
                          out.terminal.begin() + static_cast<std::size_t>(p) * static_cast<std::size_t>(n));
            if (req.terminal_weight && !xw.escaped) {
                const double w = req.terminal_weight(xw.x);
                out.weight_values[static_cast<std::size_t>(p)] = w;
                double* acc = part_weighted.data() + static_cast<std::size_t>(blk) * static_cast<std::size_t>(n);
                for (int l = 0; l < n; ++l) acc[l] += w * u[static_cast<std::size_t>(l)];
                ++part_count[static_cast<std::size_t>(blk)];
            }
        }
    }, block);

    for (std::uint8_t e : out.escaped) out.n_escaped += e;
    if (req.terminal_weight) {
        std::int64_t total = 0;
        for (std::int64_t b = 0; b < n_blocks; ++b) {
            total += part_count[static_cast<std::size_t>(b)];
            for (int l = 0; l < n; ++l)
                out.weighted_mean[l] += part_weighted[static_cast<std::size_t>(b) * static_cast<std::size_t>(n) +
                                                      static_cast<std::size_t>(l)];
        }
        if (total > 0) out.weighted_mean *= 1.0 / static_cast<double>(total);
    }
    return out;
}

} // namespace mfsde
