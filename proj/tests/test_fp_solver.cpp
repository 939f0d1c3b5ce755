#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "mfsde/fp_solver.hpp"

using namespace mfsde;

namespace {

GridFunction gaussian(const Grid1D& g, double mean, double std) {
    return GridFunction::sample(g, [=](double x) {
        const double q = (x - mean) / std;
        return std::exp(-0.5 * q * q) / (std * std::sqrt(2.0 * std::numbers::pi));
    });
}

CoefficientModel pure_diffusion(const Grid1D& g) {
    CoefficientSpec spec;
    spec.sigma0 = std::numbers::sqrt2; // a = 1
    return make_state_invariant_model(spec, g);
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

} // namespace

TEST_CASE("heat kernel oracle", "[fp]") {
    const Grid1D g(-8.0, 8.0, 1601); // dx = 0.01
    const CoefficientModel model = pure_diffusion(g);
    const GridFunction mu = gaussian(g, 0.0, 0.5);
    FpConfig cfg;
    cfg.n_steps = 500; // dt = 1e-3 over [0, 0.5]
    const DensityPath path = solve_fp(model, mu, 0.0, 0.5, cfg);

    // exact solution: variance grows by 2*a*s
    const GridFunction exact = gaussian(g, 0.0, std::sqrt(0.25 + 2.0 * 0.5));
    GridFunction err = path.slice(path.n_steps());
    err -= exact;
    INFO("L2 error " << l2_norm(err));
    REQUIRE(l2_norm(err) <= 1e-3);
}

TEST_CASE("mass conservation is exact", "[fp]") {
    const Grid1D g(-8.0, 8.0, 201);
    const CoefficientModel model = functional_model(g);
    const GridFunction mu = gaussian(g, 0.0, 0.7);
    FpConfig cfg;
    cfg.n_steps = 200;
    const DensityPath path = solve_fp(model, mu, 0.0, 0.5, cfg);
    const double mass0 = quadrature(mu);
    for (int j = 0; j <= path.n_steps(); ++j)
        REQUIRE(std::abs(quadrature(path.slice(j)) - mass0) <= 1e-10);
}

TEST_CASE("state-invariant drift transports the mean", "[fp]") {
    const Grid1D g(-8.0, 8.0, 801);
    const CoefficientModel model = functional_model(g);
    const GridFunction mu = gaussian(g, 0.0, 0.7);
    FpConfig cfg;
    cfg.n_steps = 500;
    const DensityPath path = solve_fp(model, mu, 0.0, 0.5, cfg);

    auto mean_of = [&](const GridFunction& u) {
        GridFunction xm(g);
        for (int i = 0; i < g.n_points(); ++i) xm[i] = g.node(i) * u[i];
        return quadrature(xm) / quadrature(u);
    };
    double drift = 0.0;
    const auto cache = model.cache_for(g);
    for (int j = 0; j < path.n_steps(); ++j)
        drift += model.b(0.0, model.functionals(cache, path.slice(j))) * path.dt();
    REQUIRE(std::abs(mean_of(path.slice(path.n_steps())) - (mean_of(mu) + drift)) < 1e-3);
}

TEST_CASE("positivity is monitored", "[fp]") {
    const Grid1D g(-8.0, 8.0, 401);
    const CoefficientModel model = functional_model(g);
    FpConfig cfg;
    cfg.n_steps = 250;
    const DensityPath path = solve_fp(model, gaussian(g, 0.0, 0.7), 0.0, 0.5, cfg);
    REQUIRE(path.min_value >= -1e-8);
}

TEST_CASE("flow property", "[fp]") {
    const Grid1D g(-8.0, 8.0, 201);
    const CoefficientModel model = functional_model(g);
    const GridFunction mu = gaussian(g, 0.0, 0.7);
    FpConfig cfg;
    cfg.n_steps = 100;

    SECTION("restart at a grid node reproduces the recursion") {
        REQUIRE(flow_property_check(model, mu, 0.0, 0.2, 0.5, cfg) <= 1e-12);
    }
    SECTION("s = t is a degenerate restart") {
        REQUIRE(flow_property_check(model, mu, 0.0, 0.0, 0.5, cfg) <= 1e-13);
    }
    SECTION("off-mesh restart time is rejected") {
        REQUIRE_THROWS_AS(flow_property_check(model, mu, 0.0, 0.2501, 0.5, cfg),
                          std::invalid_argument);
    }
    SECTION("picard restarts accumulate at most tol per step") {
        FpConfig pc = cfg;
        pc.picard_iters = 3;
        pc.picard_tol = 1e-9;
        REQUIRE(flow_property_check(model, mu, 0.0, 0.2, 0.5, pc) <= pc.picard_tol * pc.n_steps);
    }
}

TEST_CASE("continuous dependence on the initial density", "[fp]") {
    FpConfig cfg;
    double ratio[2];
    for (int r = 0; r < 2; ++r) {
        const Grid1D g(-8.0, 8.0, r == 0 ? 201 : 401);
        cfg.n_steps = r == 0 ? 100 : 200;
        const CoefficientModel model = functional_model(g);
        const GridFunction mu = gaussian(g, 0.0, 0.7);
        GridFunction mu2 = gaussian(g, 0.4, 0.6);
        mu2 *= 0.1;
        mu2 += mu;
        const DensityPath p1 = solve_fp(model, mu, 0.0, 0.5, cfg);
        const DensityPath p2 = solve_fp(model, mu2, 0.0, 0.5, cfg);
        GridFunction dmu = mu2;
        dmu -= mu;
        double sup = 0.0;
        for (int j = 0; j <= cfg.n_steps; ++j) {
            GridFunction d = p2.slice(j);
            d -= p1.slice(j);
            sup = std::max(sup, l2_norm(d));
        }
        ratio[r] = sup / l2_norm(dmu);
    }
    REQUIRE(ratio[0] < 10.0);
    REQUIRE(std::abs(ratio[1] - ratio[0]) < 0.1 * ratio[0]);
}

TEST_CASE("norm report", "[fp]") {
    SECTION("stationary state has zero Hoelder quotient") {
        const Grid1D g(0.0, 1.0, 51);
        DensityPath path(g, 0.0, 1.0, 10);
        for (int j = 0; j <= 10; ++j)
            path.push_slice(GridFunction::sample(g, [](double) { return 1.0; }));
        const NormReport rep = norm_report(path);
        REQUIRE(rep.holder_quotient == 0.0);
    }
    SECTION("spreading gaussian: L2 norm decreases in time") {
        const Grid1D g(-8.0, 8.0, 401);
        const CoefficientModel model = pure_diffusion(g);
        FpConfig cfg;
        cfg.n_steps = 200;
        const DensityPath path = solve_fp(model, gaussian(g, 0.0, 0.5), 0.0, 0.5, cfg);
        const NormReport rep = norm_report(path);
        for (std::size_t j = 1; j < rep.l2.size(); ++j) REQUIRE(rep.l2[j] <= rep.l2[j - 1] + 1e-12);
        REQUIRE(rep.sup_l2 == Catch::Approx(rep.l2.front()));
    }
    SECTION("report is stable under time refinement") {
        const Grid1D g(-8.0, 8.0, 401);
        const CoefficientModel model = functional_model(g);
        const GridFunction mu = gaussian(g, 0.0, 0.7);
        NormReport reps[2];
        for (int r = 0; r < 2; ++r) {
            FpConfig cfg;
            cfg.n_steps = r == 0 ? 100 : 200;
            reps[r] = norm_report(solve_fp(model, mu, 0.0, 0.2, cfg));
        }
        REQUIRE(std::abs(reps[1].sup_l2 - reps[0].sup_l2) < 0.05 * reps[0].sup_l2);
        REQUIRE(std::abs(reps[1].sup_w12 - reps[0].sup_w12) < 0.05 * reps[0].sup_w12);
        REQUIRE(std::abs(reps[1].holder_quotient - reps[0].holder_quotient) <
                0.05 * reps[0].holder_quotient);
    }
}

TEST_CASE("solver preconditions", "[fp]") {
    const Grid1D g(-8.0, 8.0, 101);
    const CoefficientModel model = pure_diffusion(g);
    FpConfig cfg;
    SECTION("horizon must be positive") {
        REQUIRE_THROWS_AS(solve_fp(model, gaussian(g, 0.0, 0.5), 0.5, 0.5, cfg),
                          std::invalid_argument);
    }
    SECTION("non-decaying initial data is rejected") {
        const GridFunction flat = GridFunction::sample(g, [](double) { return 1.0; });
        REQUIRE_THROWS_AS(solve_fp(model, flat, 0.0, 0.5, cfg), std::invalid_argument);
    }
}
