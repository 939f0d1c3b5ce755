#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "mfsde/coefficients.hpp"
#include "mfsde/grid.hpp"
#include "mfsde/value_function.hpp"

namespace mfsde {

/// Signed mixture of Gaussian pdfs; the initial densities and perturbation
/// directions are all of this form (smooth, localized, boundary-decaying).
struct DensityComponent {
    double weight = 1.0;
    double mean = 0.0;
    double std = 1.0;
};
struct DensitySpec {
    std::vector<DensityComponent> components;
};

inline GridFunction sample_density(const DensitySpec& spec, const Grid1D& grid) {
    return GridFunction::sample(grid, [&spec](double x) {
        double v = 0.0;
        for (const auto& c : spec.components) {
            const double q = (x - c.mean) / c.std;
            v += c.weight * std::exp(-0.5 * q * q) / (c.std * std::sqrt(2.0 * std::numbers::pi));
        }
        return v;
    });
}

struct ScenarioSpec {
    std::string name = "custom";
    double x_min = -8.0, x_max = 8.0;
    int n_points = 201;
    double t = 0.0, T = 0.5;
    int n_steps = 250;
    CoefficientSpec coeffs;
    DensitySpec mu;
    // terminal functional Phi(x,m) = phi_scale * g(x) * outer(<h,m>) + phi_const
    Profile phi_g = Profile::tanh_profile(1.0);
    ScalarMap phi_outer{ScalarMap::Kind::exp_neg_square};
    Profile phi_h = Profile::gauss_bump(0.0, 1.0);
    double phi_scale = 1.0, phi_offset = 0.0, phi_const = 0.0;
    int n_paths = 20000;
    std::uint64_t seed = 910443;
    double x0 = 0.25;
    std::vector<DensitySpec> directions;
    int picard_iters = 0;
    double picard_tol = 1e-10;
    int kernel_snapshot_every = 1;
    int threads = 0;
    // discretization constants entering error budgets, calibrated from the
    // refinement studies in the acceptance suite (measured ~0.08 and ~1.3 on
    // the reference scenario, stored with a cushion)
    double c_est_master = 0.2;
    double c_est_ito = 2.0;
};

class Scenario {
public:
    explicit Scenario(ScenarioSpec spec)
        : spec_(std::move(spec)), grid_(spec_.x_min, spec_.x_max, spec_.n_points),
          model_(make_state_dependent_model(spec_.coeffs, grid_)),
          mu_(sample_density(spec_.mu, grid_)),
          phi_(spec_.phi_g,
               SmoothFunctional(GridFunction::sample(grid_, [this](double x) { return spec_.phi_h.value(x); }),
                                spec_.phi_outer, spec_.phi_scale, spec_.phi_offset),
               spec_.phi_const) {
        if (!(spec_.T > spec_.t)) throw config_error("scenario '" + spec_.name + "': need T > t");
        const int n = grid_.n_points();
        if (std::abs(mu_[0]) > 1e-10 || std::abs(mu_[n - 1]) > 1e-10)
            throw config_error("scenario '" + spec_.name +
                               "': initial density does not decay below 1e-10 at the boundary");
        for (const auto& d : spec_.directions) {
            GridFunction gd = sample_density(d, grid_);
            if (!gd.all_finite() || std::abs(gd[0]) > 1e-10 || std::abs(gd[n - 1]) > 1e-10)
                throw config_error("scenario '" + spec_.name +
                                   "': direction does not decay at the boundary");
            directions_.push_back(std::move(gd));
        }
    }

    const ScenarioSpec& spec() const { return spec_; }
    const Grid1D& grid() const { return grid_; }
    const CoefficientModel& model() const { return model_; }
    const GridFunction& mu() const { return mu_; }
    const TerminalFunctional& phi() const { return phi_; }
    const std::vector<GridFunction>& directions() const { return directions_; }

    McConfig mc() const {
        McConfig cfg;
        cfg.T = spec_.T;
        cfg.n_steps = spec_.n_steps;
        cfg.n_paths = spec_.n_paths;
        cfg.seed = spec_.seed;
        cfg.picard_iters = spec_.picard_iters;
        cfg.picard_tol = spec_.picard_tol;
        cfg.threads = spec_.threads;
        cfg.kernel_snapshot_every = spec_.kernel_snapshot_every;
        return cfg;
    }
    FpConfig fp() const { return FpConfig{spec_.n_steps, spec_.picard_iters, spec_.picard_tol}; }

private:
    ScenarioSpec spec_;
    Grid1D grid_;
    CoefficientModel model_;
    GridFunction mu_;
    TerminalFunctional phi_;
    std::vector<GridFunction> directions_;
};

/// Named instances every test and CLI command references.
inline ScenarioSpec scenario_catalog(const std::string& name) {
    ScenarioSpec s;
    s.name = name;
    if (name == "pure-diffusion") {
        // constant coefficients: b = 0, sigma = sqrt(2), a = 1
        s.n_points = 801;
        s.T = 1.0;
        s.n_steps = 1000;
        s.coeffs.b0 = 0.0;
        s.coeffs.b1 = 0.0;
        s.coeffs.sigma0 = std::numbers::sqrt2;
        s.coeffs.sigma1 = 0.0;
        s.mu.components = {{1.0, 0.0, 0.5}};
        s.n_paths = 10000;
        s.x0 = 0.0;
        s.directions = {DensitySpec{{{1.0, 0.3, 0.6}}},
                        DensitySpec{{{1.0, -1.0, 0.8}, {-1.0, 1.0, 0.8}}}};
        return s;
    }
    if (name == "state-invariant-ref") {
        // sigma(m) = 1 + 0.3 tanh(<h_s,m>), b(m) = 0.5 sin(<h_b,m>);
        // gamma = (1 - 0.3)^2 / 2 = 0.245
        s.n_points = 201;
        s.T = 0.5;
        s.n_steps = 250;
        s.coeffs.b0 = 0.0;
        s.coeffs.b1 = 0.5;
        s.coeffs.outer_b = ScalarMap(ScalarMap::Kind::sin_map);
        s.coeffs.h_b = Profile::gauss_bump(0.5, 0.8);
        s.coeffs.sigma0 = 1.0;
        s.coeffs.sigma1 = 0.3;
        s.coeffs.outer_sigma = ScalarMap(ScalarMap::Kind::tanh_map);
        s.coeffs.h_sigma = Profile::gauss_bump(0.0, 1.0);
        s.mu.components = {{1.0, 0.0, 0.7}};
        s.phi_g = Profile::tanh_profile(1.0);
        s.phi_outer = ScalarMap(ScalarMap::Kind::exp_neg_square);
        s.phi_h = Profile::gauss_bump(0.0, 1.0);
        s.phi_const = 0.5;
        s.n_paths = 20000;
        s.x0 = 0.25;
        s.directions = {DensitySpec{{{1.0, 0.3, 0.6}}},
                        DensitySpec{{{1.0, -1.0, 0.8}, {-1.0, 1.0, 0.8}}},
                        DensitySpec{{{0.8, 0.0, 1.2}}}};
        return s;
    }
    if (name == "state-dep-drift") {
        // b(x,m) = tanh(x) * (0.4 + 0.2 sin(<h_b,m>)): directional mode only
        s.n_points = 201;
        s.T = 0.5;
        s.n_steps = 250;
        s.coeffs.b0 = 0.4;
        s.coeffs.b1 = 0.2;
        s.coeffs.outer_b = ScalarMap(ScalarMap::Kind::sin_map);
        s.coeffs.h_b = Profile::gauss_bump(0.5, 0.8);
        s.coeffs.beta = Profile::tanh_profile(1.0);
        s.coeffs.sigma0 = 1.0;
        s.coeffs.sigma1 = 0.2;
        s.coeffs.outer_sigma = ScalarMap(ScalarMap::Kind::tanh_map);
        s.coeffs.h_sigma = Profile::gauss_bump(0.0, 1.0);
        s.mu.components = {{1.0, 0.0, 0.7}};
        s.phi_const = 0.5;
        s.n_paths = 20000;
        s.x0 = 0.25;
        s.directions = {DensitySpec{{{1.0, 0.3, 0.6}}},
                        DensitySpec{{{1.0, -1.0, 0.8}, {-1.0, 1.0, 0.8}}}};
        return s;
    }
    throw config_error("unknown scenario '" + name + "'");
}

/// Halves dx and dt and quadruples the path count, `levels` times.
inline ScenarioSpec refine(ScenarioSpec s, int levels = 1) {
    for (int l = 0; l < levels; ++l) {
        s.n_points = 2 * s.n_points - 1;
        s.n_steps *= 2;
        s.n_paths *= 4;
    }
    return s;
}

/// Analytic moments of the staircase density
///   rho(x) = sum_n c/n * 1_[n, n+1/n)(x),  c = 6/pi^2,
/// normalized so the total mass is exactly 1 (c/n * 1/n summed over n is
/// c * zeta(2) = 1). rho is square-integrable yet has no finite first
/// moment: partial sums plus Euler-Maclaurin tails where the series
/// converges; the first absolute moment diverges, so only its partial sum
/// is returned.
struct StaircaseMoments {
    double mass = 0.0;                 // -> 1
    double l2_sq = 0.0;                // -> (6/pi^2)^2 zeta(3)
    double first_moment_partial = 0.0; // >= (6/pi^2) H_N, diverges
};

inline constexpr double kStaircaseWeight = 6.0 / (std::numbers::pi * std::numbers::pi);

inline StaircaseMoments staircase_moments(std::int64_t n_terms) {
    if (n_terms < 1) throw std::invalid_argument("staircase_moments: n_terms must be >= 1");
    const double c = kStaircaseWeight;
    double s2 = 0.0, s3 = 0.0, harmonic = 0.0;
    for (std::int64_t n = n_terms; n >= 1; --n) { // small terms first
        const double inv = 1.0 / static_cast<double>(n);
        s2 += inv * inv;
        s3 += inv * inv * inv;
        harmonic += inv;
    }
    const double N = static_cast<double>(n_terms);
    const double tail2 = 1.0 / N - 1.0 / (2.0 * N * N) + 1.0 / (6.0 * N * N * N) -
                         1.0 / (30.0 * N * N * N * N * N);
    const double tail3 = 1.0 / (2.0 * N * N) - 1.0 / (2.0 * N * N * N) +
                         1.0 / (4.0 * N * N * N * N);
    StaircaseMoments m;
    m.mass = c * (s2 + tail2);
    m.l2_sq = c * c * (s3 + tail3);
    // int_n^{n+1/n} x dx = 1/n + 1/(2 n^3), summed against the weights
    m.first_moment_partial = c * (harmonic + 0.5 * s3);
    return m;
}

} // namespace mfsde
