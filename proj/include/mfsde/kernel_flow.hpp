#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mfsde/coefficients.hpp"
#include "mfsde/fp_solver.hpp"
#include "mfsde/grid.hpp"
#include "mfsde/parallel.hpp"

namespace mfsde {

/// Width of the Gaussian that regularizes delta(x - y), in grid cells.
inline constexpr double kDeltaWidthCells = 2.0;

struct KernelOptions {
    int snapshot_every = 1; // keep every r-th slice (the first and last always)
    int threads = 0;
};

/// Time-indexed two-argument field K_j[i][l] ~ k(s_j, x_i, y_l) on a shared
/// grid for both axes. Full slices are snapshot-thinned; the per-step
/// functional traces <h_b, k(s,.,y)> and <h_sigma, k(s,.,y)> that the
/// U-process needs are kept at every step.
class KernelPath {
public:
    KernelPath(const Grid1D& grid, double t0, double t1, int n_steps, int snapshot_every)
        : grid_(grid), t0_(t0), t1_(t1), n_steps_(n_steps),
          snapshot_every_(std::max(1, snapshot_every)) {
        const std::size_t nn = static_cast<std::size_t>(n_steps + 1) *
                               static_cast<std::size_t>(grid.n_points());
        trace_b_.assign(nn, 0.0);
        trace_s_.assign(nn, 0.0);
    }

    const Grid1D& grid() const { return grid_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    int n_steps() const { return n_steps_; }
    double dt() const { return (t1_ - t0_) / n_steps_; }
    int snapshot_every() const { return snapshot_every_; }

    bool stored(int j) const { return j % snapshot_every_ == 0 || j == n_steps_; }

    void push_slice(int j, std::vector<double> row_major) {
        stored_steps_.push_back(j);
        slices_.push_back(std::move(row_major));
    }

    /// Row-major slice [x][y] at step j; throws if j was thinned away.
    const std::vector<double>& slice_at_step(int j) const {
        for (std::size_t k = 0; k < stored_steps_.size(); ++k)
            if (stored_steps_[k] == j) return slices_[k];
        throw std::invalid_argument("KernelPath: slice at step " + std::to_string(j) +
                                    " was not retained (snapshot_every=" +
                                    std::to_string(snapshot_every_) + ")");
    }
    int index_of_time(double s) const {
        const double r = (s - t0_) / dt();
        const int j = static_cast<int>(std::lround(r));
        if (j < 0 || j > n_steps_ || std::abs(r - j) > 1e-8 * (1.0 + std::abs(r)))
            throw std::invalid_argument("KernelPath: time off the mesh");
        return j;
    }
    const std::vector<double>& slice_at_time(double s) const {
        return slice_at_step(index_of_time(s));
    }
    const std::vector<int>& stored_steps() const { return stored_steps_; }

    double trace_b(int j, int l) const {
        return trace_b_[static_cast<std::size_t>(j) * static_cast<std::size_t>(grid_.n_points()) +
                        static_cast<std::size_t>(l)];
    }
    double trace_s(int j, int l) const {
        return trace_s_[static_cast<std::size_t>(j) * static_cast<std::size_t>(grid_.n_points()) +
                        static_cast<std::size_t>(l)];
    }
    std::vector<double>& trace_b_data() { return trace_b_; }
    std::vector<double>& trace_s_data() { return trace_s_; }
    const std::vector<double>& trace_b_data() const { return trace_b_; }
    const std::vector<double>& trace_s_data() const { return trace_s_; }

private:
    Grid1D grid_;
    double t0_, t1_;
    int n_steps_, snapshot_every_;
    std::vector<int> stored_steps_;
    std::vector<std::vector<double>> slices_;
    std::vector<double> trace_b_, trace_s_;
};

namespace detail {

inline void require_mesh_match(const DensityPath& m_path, const Grid1D& grid, int n_steps) {
    if (m_path.grid() != grid)
        throw std::invalid_argument("linearized flow: grid does not match the density path");
    if (m_path.n_steps() != n_steps)
        throw std::invalid_argument("linearized flow: time mesh does not match the density path");
    if (!m_path.complete())
        throw std::invalid_argument("linearized flow: density path is incomplete");
}

/// Per-step data shared by the directional and kernel solvers: the frozen
/// local operator plus everything needed to build the perturbation flux
///   F_pert(S_b, S_s)_{i+1/2} built from (da_w*S_s, db_w*S_b) applied to
///   mbar = theta*m_{j+1} + (1-theta)*m_j,
/// which makes each solver the exact derivative of the discrete FP recursion.
struct LinearizedStep {
    FluxStepper stepper;
    std::vector<double> da_w, db_w; // weights at nodes
    std::vector<double> mbar;

    LinearizedStep(const CoefficientModel& model, const Grid1D& g, CoefficientModel::Inputs in,
                   const GridFunction& m_now, const GridFunction& m_next, double dt)
        : stepper(g, sample_a(model, g, in), sample_b(model, g, in), dt),
          da_w(static_cast<std::size_t>(g.n_points())),
          db_w(static_cast<std::size_t>(g.n_points())),
          mbar(static_cast<std::size_t>(g.n_points())) {
        for (int i = 0; i < g.n_points(); ++i) {
            const auto k = static_cast<std::size_t>(i);
            da_w[k] = model.da_dm_weight(g.node(i), in);
            db_w[k] = model.db_dm_weight(g.node(i), in);
            mbar[k] = FluxStepper::theta * m_next[i] + (1.0 - FluxStepper::theta) * m_now[i];
        }
    }

    struct Workspace {
        FluxStepper::Workspace fs;
        std::vector<double> a_pert, b_pert, pert_flux;
    };

    /// Advances one column given its functional coordinates (S_b, S_s).
    void advance(double sb, double ss, std::vector<double>& w, Workspace& ws,
                 const Grid1D& g) const {
        if (sb == 0.0 && ss == 0.0) {
            w = stepper.step(w, nullptr, ws.fs);
            return;
        }
        const std::size_t n = da_w.size();
        ws.a_pert.resize(n);
        ws.b_pert.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            ws.a_pert[i] = da_w[i] * ss;
            ws.b_pert[i] = db_w[i] * sb;
        }
        FluxStepper::flux_of(g, ws.a_pert, ws.b_pert, mbar, ws.pert_flux);
        w = stepper.step(w, &ws.pert_flux, ws.fs);
    }
};

} // namespace detail

/// Directional derivative of the density flow: solves the linearized FP
/// equation along mu_tilde with coefficients frozen from m_path.
inline DensityPath solve_directional(const CoefficientModel& model, const DensityPath& m_path,
                                     const GridFunction& mu_tilde, const FpConfig& cfg) {
    const Grid1D& g = mu_tilde.grid();
    detail::require_mesh_match(m_path, g, cfg.n_steps);
    if (!mu_tilde.all_finite())
        throw std::invalid_argument("solve_directional: direction is not finite");

    DensityPath out(g, m_path.t0(), m_path.t1(), m_path.n_steps());
    out.push_slice(mu_tilde);
    const auto cache = model.cache_for(g);
    std::vector<double> w = mu_tilde.values();
    detail::LinearizedStep::Workspace ws;
    for (int j = 0; j < m_path.n_steps(); ++j) {
        const GridFunction& m_now = m_path.slice(j);
        const auto in = model.functionals(cache, m_now);
        const detail::LinearizedStep step(model, g, in, m_now, m_path.slice(j + 1), m_path.dt());
        GridFunction cur(g, w);
        step.advance(l2_inner(cache.hb, cur), l2_inner(cache.hs, cur), w, ws, g);
        GridFunction slice(g, w);
        if (!slice.all_finite())
            throw numerical_error("solve_directional: non-finite slice at step " +
                                  std::to_string(j + 1));
        out.push_slice(std::move(slice));
    }
    return out;
}

/// Solution of the scalar companion equation for the fundamental part:
/// h(s, z) on the doubled grid, started from a normalized Gaussian of width
/// kDeltaWidthCells * dx. Exposed separately because it has an exact
/// constant-coefficient oracle.
inline DensityPath solve_h(const CoefficientModel& model, const DensityPath& m_path) {
    if (!model.state_invariant())
        throw unsupported_model_error(
            "solve_h: fundamental-solution route requires a state-invariant model "
            "(the translation construction needs b and sigma independent of x); "
            "use solve_directional instead");
    const Grid1D& g = m_path.grid();
    const double width = g.x_max() - g.x_min();
    const Grid1D zg(-width, width, 2 * g.n_points() - 1);
    const double sig = kDeltaWidthCells * g.dx();

    GridFunction h0 = GridFunction::sample(zg, [sig](double z) {
        return std::exp(-0.5 * z * z / (sig * sig)) / (sig * std::sqrt(2.0 * std::numbers::pi));
    });
    h0 *= 1.0 / quadrature(h0); // unit mass on the grid, exactly

    DensityPath h_path(zg, m_path.t0(), m_path.t1(), m_path.n_steps());
    h_path.push_slice(h0);
    const auto cache = model.cache_for(g);
    std::vector<double> w = h0.values();
    const int nz = zg.n_points();
    for (int j = 0; j < m_path.n_steps(); ++j) {
        const auto in = model.functionals(cache, m_path.slice(j));
        const std::vector<double> a(static_cast<std::size_t>(nz), model.a(0.0, in));
        const std::vector<double> b(static_cast<std::size_t>(nz), model.b(0.0, in));
        detail::FluxStepper stepper(zg, a, b, m_path.dt());
        w = stepper.step(w, nullptr);
        GridFunction slice(zg, w);
        if (!slice.all_finite())
            throw numerical_error("solve_h: non-finite slice at step " + std::to_string(j + 1));
        h_path.push_slice(std::move(slice));
    }
    return h_path;
}

/// Fundamental part f(s,x,y) = h(s, x-y), assembled by translation.
inline KernelPath solve_fundamental(const CoefficientModel& model, const DensityPath& m_path,
                                    const KernelOptions& opts = {}) {
    const DensityPath h_path = solve_h(model, m_path); // also validates the model
    const Grid1D& g = m_path.grid();
    const int n = g.n_points();
    KernelPath f(g, m_path.t0(), m_path.t1(), m_path.n_steps(), opts.snapshot_every);
    const auto cache = model.cache_for(g);

    for (int j = 0; j <= m_path.n_steps(); ++j) {
        const GridFunction& h = h_path.slice(j);
        // traces <h_b, f(s,.,y_l)> by discrete correlation with the h profile
        for (int l = 0; l < n; ++l) {
            double tb = 0.0, ts = 0.0;
            for (int i = 0; i < n; ++i) {
                const double w = quad_weight(g, i) * h[i - l + n - 1];
                tb += w * cache.hb[i];
                ts += w * cache.hs[i];
            }
            const std::size_t at = static_cast<std::size_t>(j) * static_cast<std::size_t>(n) +
                                   static_cast<std::size_t>(l);
            f.trace_b_data()[at] = tb;
            f.trace_s_data()[at] = ts;
        }
        if (f.stored(j)) {
            std::vector<double> slice(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                for (int l = 0; l < n; ++l)
                    slice[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                          static_cast<std::size_t>(l)] = h[i - l + n - 1];
            f.push_slice(j, std::move(slice));
        }
    }
    return f;
}

/// Correction part g(s,x,y): one linear nonlocal PDE per y-column with source
/// terms read from the fundamental part, zero initial data. All columns share
/// the factorized local operator of each step.
inline KernelPath solve_correction(const CoefficientModel& model, const DensityPath& m_path,
                                   const KernelPath& f_path, const KernelOptions& opts = {}) {
    const Grid1D& g = m_path.grid();
    const int n = g.n_points();
    if (f_path.grid() != g || f_path.n_steps() != m_path.n_steps())
        throw std::invalid_argument("solve_correction: f-path mesh mismatch");

    KernelPath gp(g, m_path.t0(), m_path.t1(), m_path.n_steps(), opts.snapshot_every);
    const auto cache = model.cache_for(g);

    // column-major working state, all zeros at s = t
    std::vector<double> cols(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    std::vector<double> gtrace_b(static_cast<std::size_t>(n), 0.0),
        gtrace_s(static_cast<std::size_t>(n), 0.0);

    auto snapshot = [&](int j) {
        if (!gp.stored(j)) return;
        std::vector<double> row(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
        for (int l = 0; l < n; ++l)
            for (int i = 0; i < n; ++i)
                row[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                    static_cast<std::size_t>(l)] =
                    cols[static_cast<std::size_t>(l) * static_cast<std::size_t>(n) +
                         static_cast<std::size_t>(i)];
        gp.push_slice(j, std::move(row));
    };
    snapshot(0);

    for (int j = 0; j < m_path.n_steps(); ++j) {
        const GridFunction& m_now = m_path.slice(j);
        const auto in = model.functionals(cache, m_now);
        const detail::LinearizedStep step(model, g, in, m_now, m_path.slice(j + 1), m_path.dt());

        for_each_block(n, opts.threads, [&](std::int64_t, std::int64_t lo, std::int64_t hi) {
            detail::LinearizedStep::Workspace ws;
            std::vector<double> col(static_cast<std::size_t>(n));
            for (std::int64_t l = lo; l < hi; ++l) {
                double* c = cols.data() + static_cast<std::size_t>(l) * static_cast<std::size_t>(n);
                std::copy(c, c + n, col.begin());
                // pairings against the full kernel column: f-part + g-part
                const double sb = f_path.trace_b(j, static_cast<int>(l)) + gtrace_b[static_cast<std::size_t>(l)];
                const double ss = f_path.trace_s(j, static_cast<int>(l)) + gtrace_s[static_cast<std::size_t>(l)];
                step.advance(sb, ss, col, ws, g);
                std::copy(col.begin(), col.end(), c);
            }
        }, 16);

        // refresh g-traces for the next step and record them on the path
        for (int l = 0; l < n; ++l) {
            const double* c = cols.data() + static_cast<std::size_t>(l) * static_cast<std::size_t>(n);
            double tb = 0.0, ts = 0.0;
            for (int i = 0; i < n; ++i) {
                const double w = quad_weight(g, i) * c[i];
                tb += w * cache.hb[i];
                ts += w * cache.hs[i];
            }
            gtrace_b[static_cast<std::size_t>(l)] = tb;
            gtrace_s[static_cast<std::size_t>(l)] = ts;
            const std::size_t at = static_cast<std::size_t>(j + 1) * static_cast<std::size_t>(n) +
                                   static_cast<std::size_t>(l);
            gp.trace_b_data()[at] = tb;
            gp.trace_s_data()[at] = ts;
        }
        snapshot(j + 1);
    }
    return gp;
}

/// k = f + g, slicewise; meshes and snapshot layout must agree.
inline KernelPath assemble_kernel(const KernelPath& f, const KernelPath& g) {
    if (f.grid() != g.grid() || f.n_steps() != g.n_steps() ||
        f.stored_steps() != g.stored_steps())
        throw std::invalid_argument("assemble_kernel: mesh or snapshot layout mismatch");
    KernelPath k(f.grid(), f.t0(), f.t1(), f.n_steps(), f.snapshot_every());
    for (int j : f.stored_steps()) {
        std::vector<double> s = f.slice_at_step(j);
        const std::vector<double>& sg = g.slice_at_step(j);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += sg[i];
        k.push_slice(j, std::move(s));
    }
    for (std::size_t i = 0; i < k.trace_b_data().size(); ++i) {
        k.trace_b_data()[i] = f.trace_b_data()[i] + g.trace_b_data()[i];
        k.trace_s_data()[i] = f.trace_s_data()[i] + g.trace_s_data()[i];
    }
    return k;
}

/// Row-wise quadrature: (K_j mu_tilde)(x_i) = Int k(s,x_i,y) mu_tilde(y) dy.
inline GridFunction apply_kernel(const KernelPath& k, const GridFunction& mu_tilde, double s) {
    const Grid1D& g = k.grid();
    mu_tilde.require_same_grid(GridFunction(g));
    const std::vector<double>& K = k.slice_at_time(s);
    const int n = g.n_points();
    GridFunction out(g);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        const double* row = K.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(n);
        for (int l = 0; l < n; ++l) acc += quad_weight(g, l) * row[l] * mu_tilde[l];
        out[i] = acc;
    }
    return out;
}

/// Column-wise quadrature: phi(s, y_l) = Int k(s,x,y_l) phi(x) dx.
inline GridFunction kernel_test_function(const KernelPath& k, const GridFunction& phi, double s) {
    const Grid1D& g = k.grid();
    phi.require_same_grid(GridFunction(g));
    const std::vector<double>& K = k.slice_at_time(s);
    const int n = g.n_points();
    GridFunction out(g);
    for (int l = 0; l < n; ++l) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += quad_weight(g, i) *
                   K[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                     static_cast<std::size_t>(l)] *
                   phi[i];
        out[l] = acc;
    }
    return out;
}

} // namespace mfsde
