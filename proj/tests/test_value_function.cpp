#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "mfsde/value_function.hpp"

using namespace mfsde;

namespace {

const Grid1D grid(-8.0, 8.0, 201);

GridFunction gaussian(const Grid1D& g, double mean, double std) {
    return GridFunction::sample(g, [=](double x) {
        const double q = (x - mean) / std;
        return std::exp(-0.5 * q * q) / (std * std::sqrt(2.0 * std::numbers::pi));
    });
}

CoefficientModel functional_model(const Grid1D& g) {
    CoefficientSpec spec;
    spec.b1 = 0.5;
    spec.outer_b = ScalarMap(ScalarMap::Kind::sin_map);
    spec.h_b = Profile::gauss_bump(0.5, 0.8);
    spec.sigma0 = 1.0;
    spec.sigma1 = 0.3;
    spec.outer_sigma = ScalarMap(ScalarMap::Kind::tanh_map);
    spec.h_sigma = Profile::gauss_bump(0.0, 1.0);
    return make_state_invariant_model(spec, g);
}

TerminalFunctional reference_phi(const Grid1D& g) {
    return TerminalFunctional(
        Profile::tanh_profile(1.0),
        SmoothFunctional(GridFunction::sample(g, [](double x) { return std::exp(-0.5 * x * x); }),
                         ScalarMap(ScalarMap::Kind::exp_neg_square)),
        0.5);
}

TerminalFunctional identity_phi(const Grid1D& g) {
    return TerminalFunctional(Profile::identity(),
                              SmoothFunctional(GridFunction(g), ScalarMap(ScalarMap::Kind::one)),
                              0.0);
}

TerminalFunctional constant_phi(const Grid1D& g, double c) {
    return TerminalFunctional(Profile::constant(0.0),
                              SmoothFunctional(GridFunction(g), ScalarMap(ScalarMap::Kind::one)),
                              c);
}

McConfig small_cfg(int paths = 4000, std::uint64_t seed = 7) {
    McConfig cfg;
    cfg.T = 0.25;
    cfg.n_steps = 125;
    cfg.n_paths = paths;
    cfg.seed = seed;
    return cfg;
}

} // namespace

TEST_CASE("value evaluation", "[value]") {
    const CoefficientModel model = functional_model(grid);
    const GridFunction mu = gaussian(grid, 0.0, 0.7);
    const McConfig cfg = small_cfg();

    SECTION("constant terminal functional is exact with zero error") {
        const ValueReport rep = eval_v(model, constant_phi(grid, 2.5), 0.0, 0.3, mu, cfg);
        REQUIRE(rep.v == 2.5);
        REQUIRE(rep.v_std_err == 0.0);
    }
    SECTION("driftless identity functional is a martingale") {
        CoefficientSpec spec;
        spec.sigma0 = 1.1;
        const CoefficientModel pure = make_state_invariant_model(spec, grid);
        const ValueReport rep = eval_v(pure, identity_phi(grid), 0.0, 0.4, mu, cfg);
        REQUIRE(std::abs(rep.v - 0.4) <= 4.0 * rep.v_std_err);
    }
    SECTION("independent seeds agree within the combined error bars") {
        const ValueReport a = eval_v(model, reference_phi(grid), 0.0, 0.25, mu, small_cfg(8000, 1));
        const ValueReport b = eval_v(model, reference_phi(grid), 0.0, 0.25, mu, small_cfg(8000, 2));
        const double se = std::sqrt(a.v_std_err * a.v_std_err + b.v_std_err * b.v_std_err);
        REQUIRE(std::abs(a.v - b.v) <= 4.0 * se);
    }
    SECTION("t == T needs no simulation and is exact") {
        const ValueReport rep = eval_v(model, reference_phi(grid), cfg.T, 0.3, mu, cfg);
        REQUIRE(rep.v == reference_phi(grid).phi(0.3, mu));
        REQUIRE(rep.v_std_err == 0.0);
    }
}

TEST_CASE("spatial derivatives of V", "[value]") {
    const GridFunction mu = gaussian(grid, 0.0, 0.7);
    const McConfig cfg = small_cfg();

    SECTION("identity functional on a state-invariant model: V_x = 1, V_xx = 0 exactly") {
        const CoefficientModel model = functional_model(grid);
        const auto [vx, vxx] = dv_dx(model, identity_phi(grid), 0.0, 0.25, mu, cfg);
        REQUIRE(vx.mean == 1.0);
        REQUIRE(vx.std_err == 0.0);
        REQUIRE(vxx.mean == 0.0);
    }
    SECTION("constant functional: both derivatives vanish exactly") {
        const CoefficientModel model = functional_model(grid);
        const auto [vx, vxx] = dv_dx(model, constant_phi(grid, 1.0), 0.0, 0.25, mu, cfg);
        REQUIRE(vx.mean == 0.0);
        REQUIRE(vxx.mean == 0.0);
    }
    SECTION("CRN central differences match V_x, V_xx within 3 std errors plus bias") {
        CoefficientSpec spec; // x-dependent drift makes dX nontrivial
        spec.b0 = 0.4;
        spec.beta = Profile::tanh_profile(1.0);
        spec.sigma0 = 1.0;
        const CoefficientModel model = make_state_dependent_model(spec, grid);
        const TerminalFunctional Phi = reference_phi(grid);
        const double x0 = 0.25, delta = 0.05;

        const auto fb = make_flow_bundle(model, mu, 0.0, cfg, false);
        const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());
        const ValueSamples base = value_samples(model, Phi, x0, *fb, noise, 0);
        const ValueSamples up = value_samples(model, Phi, x0 + delta, *fb, noise, 0);
        const ValueSamples dn = value_samples(model, Phi, x0 - delta, *fb, noise, 0);
        const ValueSamples up2 = value_samples(model, Phi, x0 + delta / 2, *fb, noise, 0);
        const ValueSamples dn2 = value_samples(model, Phi, x0 - delta / 2, *fb, noise, 0);

        std::vector<double> d1(base.phi.size()), d2(base.phi.size());
        std::vector<double> d1h(base.phi.size()), d2h(base.phi.size());
        for (std::size_t p = 0; p < base.phi.size(); ++p) {
            d1[p] = (up.phi[p] - dn.phi[p]) / (2.0 * delta) - base.vx[p];
            d2[p] = (up.phi[p] - 2.0 * base.phi[p] + dn.phi[p]) / (delta * delta) - base.vxx[p];
            d1h[p] = (up2.phi[p] - dn2.phi[p]) / delta - base.vx[p];
            d2h[p] = (up2.phi[p] - 2.0 * base.phi[p] + dn2.phi[p]) / (delta * delta / 4.0) -
                     base.vxx[p];
        }
        const MeanStdErr e1 = reduce_surviving(d1, base.escaped);
        const MeanStdErr e2 = reduce_surviving(d2, base.escaped);
        const MeanStdErr e1h = reduce_surviving(d1h, base.escaped);
        const MeanStdErr e2h = reduce_surviving(d2h, base.escaped);
        INFO("vx gap " << e1.mean << " se " << e1.std_err);
        INFO("vxx gap " << e2.mean << " se " << e2.std_err);
        REQUIRE(std::abs(e1.mean) <=
                3.0 * e1.std_err + 2.0 * std::abs(e1.mean - e1h.mean) + 1e-12);
        REQUIRE(std::abs(e2.mean) <=
                3.0 * e2.std_err + 2.0 * std::abs(e2.mean - e2h.mean) + 1e-10);
    }
}

TEST_CASE("functional derivative of V", "[value]") {
    const GridFunction mu = gaussian(grid, 0.0, 0.7);
    const GridFunction dir = gaussian(grid, 0.4, 0.6);
    const McConfig cfg = small_cfg();

    SECTION("m-independent functional and coefficients give the zero function") {
        CoefficientSpec spec;
        spec.b0 = 0.2;
        spec.sigma0 = 1.1;
        const CoefficientModel constant = make_state_invariant_model(spec, grid);
        const TerminalFunctional Phi(
            Profile::tanh_profile(1.0),
            SmoothFunctional(GridFunction(grid), ScalarMap(ScalarMap::Kind::one)));
        const GridFunction d = dv_dmu(constant, Phi, 0.0, 0.25, mu, cfg);
        REQUIRE(l2_norm(d) == 0.0);
    }
    SECTION("kernel pairing agrees with the Y-process pairing") {
        const CoefficientModel model = functional_model(grid);
        const TerminalFunctional Phi = reference_phi(grid);
        McConfig big = small_cfg(20000);
        const GridFunction dmu = dv_dmu(model, Phi, 0.0, 0.25, mu, big);
        const MeanStdErr viay = dv_dmu_pairing(model, Phi, 0.0, 0.25, mu, dir, big);
        const double viak = l2_inner(dmu, dir);
        INFO("kernel " << viak << " directional " << viay.mean << " +- " << viay.std_err);
        REQUIRE(std::abs(viak - viay.mean) <= 0.05 * std::abs(viay.mean) + 3.0 * viay.std_err);
    }
    SECTION("bounded result; refusal and degraded mode for x-dependent drift") {
        const CoefficientModel model = functional_model(grid);
        const TerminalFunctional Phi = reference_phi(grid);
        const GridFunction d = dv_dmu(model, Phi, 0.0, 0.25, mu, cfg);
        REQUIRE(l2_norm(d) <= 10.0 * Phi.l_phi());

        CoefficientSpec spec;
        spec.b0 = 0.4;
        spec.beta = Profile::tanh_profile(1.0);
        const CoefficientModel xdep = make_state_dependent_model(spec, grid);
        REQUIRE_THROWS_AS(dv_dmu(xdep, Phi, 0.0, 0.25, mu, cfg), unsupported_model_error);
        const MeanStdErr pair = dv_dmu_pairing(xdep, Phi, 0.0, 0.25, mu, dir, cfg);
        REQUIRE(std::isfinite(pair.mean));
    }
}

TEST_CASE("time derivative of V", "[value]") {
    const GridFunction mu = gaussian(grid, 0.0, 0.7);

    SECTION("constant functional: exactly zero") {
        const CoefficientModel model = functional_model(grid);
        const MeanStdErr r = dv_dt(model, constant_phi(grid, 3.0), 0.0, 0.25, mu, small_cfg());
        REQUIRE(r.mean == 0.0);
        REQUIRE(r.std_err == 0.0);
    }
    SECTION("density-only functional: PDE oracle without MC noise") {
        // Phi(x,m) = F(m): V(t) = F(m^{t,mu}(T)), so the time quotient is
        // computable from the PDE flow alone and has no sampling error
        const CoefficientModel model = functional_model(grid);
        const TerminalFunctional Phi(
            Profile::constant(1.0),
            SmoothFunctional(
                GridFunction::sample(grid, [](double x) { return std::exp(-0.5 * x * x); }),
                ScalarMap(ScalarMap::Kind::exp_neg_square)));
        McConfig cfg = small_cfg(100);
        const MeanStdErr formula = dv_dt(model, Phi, 0.0, 0.25, mu, cfg);
        REQUIRE(formula.std_err <= 1e-14); // path-independent integrand

        const double dt = cfg.T / cfg.n_steps;
        auto v_at = [&](double t) {
            McConfig c = cfg;
            c.n_steps = cfg.n_steps - static_cast<int>(std::lround(t / dt));
            c.n_paths = 16;
            return eval_v(model, Phi, t, 0.25, mu, c).v;
        };
        const double dtau = 8.0 * dt;
        const double e1 = std::abs((v_at(dtau) - v_at(0.0)) / dtau - formula.mean);
        const double e2 = std::abs((v_at(dtau / 2) - v_at(0.0)) / (dtau / 2) - formula.mean);
        INFO("quotient errors " << e1 << " -> " << e2);
        REQUIRE(e1 <= 0.05 * std::abs(formula.mean) + 1e-6);
        REQUIRE(e2 <= 0.75 * e1 + 1e-9);
    }
}

TEST_CASE("derivatives bounded by catalog constants", "[value]") {
    // for a state-invariant model dX = 1 and d2X = 0, so V, V_x, V_xx are
    // bounded directly by the Phi bound; dV/dt by L_Phi (2L + ||dm/ds(T)||)
    const CoefficientModel model = functional_model(grid);
    const TerminalFunctional Phi = reference_phi(grid);
    const GridFunction mu = gaussian(grid, 0.0, 0.7);
    const McConfig cfg = small_cfg();
    const ValueReport rep = value_report(model, Phi, 0.0, 0.25, mu, cfg);
    const double lphi = Phi.l_phi();
    REQUIRE(std::abs(rep.v) <= lphi);
    REQUIRE(std::abs(rep.dv_dx) <= lphi);
    REQUIRE(std::abs(rep.d2v_dx2) <= lphi);

    const auto fb = make_flow_bundle(model, mu, 0.0, cfg, false);
    const double ms_norm = l2_norm(fp_time_derivative(model, fb->m(), cfg.n_steps));
    REQUIRE(std::abs(rep.dv_dt) <= lphi * (2.0 * model.lip_bound() + ms_norm));
    REQUIRE(rep.has_dmu);
    REQUIRE(l2_norm(rep.dv_dmu) <= 10.0 * lphi);
}

TEST_CASE("value function regularity samples", "[value]") {
    const CoefficientModel model = functional_model(grid);
    const TerminalFunctional Phi = reference_phi(grid);
    const GridFunction mu = gaussian(grid, 0.0, 0.7);
    const McConfig cfg = small_cfg(8000);

    const double v0 = eval_v(model, Phi, 0.0, 0.25, mu, cfg).v;
    SECTION("Lipschitz in x") {
        for (double dx : {0.5, 1.0, 2.0}) {
            const double v1 = eval_v(model, Phi, 0.0, 0.25 + dx, mu, cfg).v;
            REQUIRE(std::abs(v1 - v0) <= 3.0 * dx);
        }
    }
    SECTION("Lipschitz in mu") {
        GridFunction mu2 = gaussian(grid, 0.3, 0.8);
        mu2 *= 0.2;
        mu2 += mu;
        const double v1 = eval_v(model, Phi, 0.0, 0.25, mu2, cfg).v;
        GridFunction d = mu2;
        d -= mu;
        REQUIRE(std::abs(v1 - v0) <= 3.0 * sobolev_norm(d, 1));
    }
    SECTION("half-Hoelder in t along the mesh") {
        for (int k : {25, 50, 100}) {
            McConfig c = cfg;
            c.n_steps = cfg.n_steps - k;
            const double t = cfg.T / cfg.n_steps * k;
            const double v1 = eval_v(model, Phi, t, 0.25, mu, c).v;
            REQUIRE(std::abs(v1 - v0) / std::sqrt(t) <= 3.0);
        }
    }
}
