#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "mfsde/verification.hpp"

using namespace mfsde;

namespace {

ScenarioSpec mini_ref() {
    ScenarioSpec s = scenario_catalog("state-invariant-ref");
    s.name = "mini-ref";
    s.n_points = 101;
    s.T = 0.25;
    s.n_steps = 50;
    s.n_paths = 4000;
    s.seed = 424242;
    return s;
}

TerminalFunctional constant_phi(const Grid1D& g, double c) {
    return TerminalFunctional(Profile::constant(0.0),
                              SmoothFunctional(GridFunction(g), ScalarMap(ScalarMap::Kind::one)),
                              c);
}

TerminalFunctional identity_phi(const Grid1D& g) {
    return TerminalFunctional(Profile::identity(),
                              SmoothFunctional(GridFunction(g), ScalarMap(ScalarMap::Kind::one)),
                              0.0);
}

} // namespace

TEST_CASE("master PDE residual", "[verification]") {
    SECTION("constant terminal functional: every component is exactly zero") {
        const Scenario sc(mini_ref());
        const ResidualReport rep = master_pde_residual(
            sc.model(), constant_phi(sc.grid(), 1.0), 0.0, sc.spec().x0, sc.mu(), sc.mc(), 1.0);
        REQUIRE(rep.term_dt == 0.0);
        REQUIRE(rep.term_x == 0.0);
        REQUIRE(rep.term_xx == 0.0);
        REQUIRE(rep.term_mu == 0.0);
        REQUIRE(rep.residual == 0.0);
        REQUIRE(rep.pass());
    }
    SECTION("residual is the exact sum of its components") {
        const Scenario sc(mini_ref());
        const ResidualReport rep = master_pde_residual(sc.model(), sc.phi(), 0.0, sc.spec().x0,
                                                       sc.mu(), sc.mc(), 2.0);
        REQUIRE(rep.residual ==
                Catch::Approx(rep.term_dt + rep.term_x + rep.term_xx + rep.term_mu).margin(1e-12));
    }
    SECTION("two resolutions: self-calibrated budget holds") {
        ScenarioSpec coarse = mini_ref();
        const ScenarioSpec fine = refine(coarse, 1);
        const Scenario sc(coarse), sf(fine);
        const ResidualReport rc = master_pde_residual(sc.model(), sc.phi(), 0.0, coarse.x0,
                                                      sc.mu(), sc.mc(), 0.0);
        const ResidualReport rf = master_pde_residual(sf.model(), sf.phi(), 0.0, fine.x0,
                                                      sf.mu(), sf.mc(), 0.0);
        const double denom = (rc.dt + rc.dx * rc.dx) - (rf.dt + rf.dx * rf.dx);
        const double c_est = std::abs(rc.residual - rf.residual) / denom;
        INFO("coarse " << rc.residual << " fine " << rf.residual << " c_est " << c_est);
        REQUIRE(std::abs(rc.residual) <=
                3.0 * rc.mc_std_err + 2.0 * c_est * (rc.dt + rc.dx * rc.dx) + 1e-12);
    }
    SECTION("state-dependent drift is refused with an explanation") {
        const Scenario sc(scenario_catalog("state-dep-drift"));
        REQUIRE_THROWS_AS(master_pde_residual(sc.model(), sc.phi(), 0.0, sc.spec().x0, sc.mu(),
                                              sc.mc(), 1.0),
                          unsupported_model_error);
    }
}

TEST_CASE("terminal condition", "[verification]") {
    const Scenario sc(mini_ref());
    SECTION("exact at t = T") {
        REQUIRE(terminal_condition_check(sc.model(), sc.phi(), sc.spec().x0, sc.mu(), sc.mc()) ==
                0.0);
        REQUIRE(terminal_condition_check(sc.model(), constant_phi(sc.grid(), 2.0), 1.3, sc.mu(),
                                         sc.mc()) == 0.0);
    }
    SECTION("one step before T stays inside the one-step Taylor envelope") {
        McConfig cfg = sc.mc();
        cfg.n_paths = 20000;
        const double dt = (cfg.T - sc.spec().t) / cfg.n_steps;
        McConfig one = cfg;
        one.n_steps = 1;
        one.T = sc.spec().t + dt; // horizon of a single step
        const ValueReport rep = eval_v(sc.model(), sc.phi(), sc.spec().t, sc.spec().x0, sc.mu(), one);
        const double phi0 = sc.phi().phi(sc.spec().x0, sc.mu());
        const double L = sc.model().lip_bound();
        const double envelope = sc.phi().l_phi() * (L * dt + L * std::sqrt(dt) *
                                                    std::sqrt(2.0 / std::numbers::pi)) +
                                3.0 * rep.v_std_err;
        REQUIRE(std::abs(rep.v - phi0) <= 1.5 * envelope);
    }
}

TEST_CASE("martingale property", "[verification]") {
    SECTION("driftless identity case: explicit inner value within bars") {
        ScenarioSpec s = mini_ref();
        s.coeffs = CoefficientSpec{};
        s.coeffs.sigma0 = 1.1;
        const Scenario sc(s);
        const McConfig cfg = sc.mc();
        const double dt = cfg.T / cfg.n_steps;
        std::vector<double> checkpoints;
        for (int k = 0; k <= 4; ++k)
            checkpoints.push_back(dt * std::lround(k * cfg.n_steps / 4.0));
        const MartingaleReport rep = martingale_check(sc.model(), identity_phi(sc.grid()), 0.0,
                                                      0.4, sc.mu(), checkpoints, cfg);
        REQUIRE(rep.drift[0] == 0.0); // degenerate checkpoint at s = t
        REQUIRE(rep.pass());
        // inner V(s, y, .) = y for this model, so M_s tracks E[X_s] = x
        for (std::size_t k = 1; k < rep.m_s.size(); ++k)
            REQUIRE(std::abs(rep.m_s[k] - 0.4) <=
                    3.0 * rep.std_err[k] + 4.0 * rep.v_ref_std_err + 1e-12);
    }
    SECTION("reference scenario: all checkpoints within combined bars") {
        const Scenario sc(mini_ref());
        const McConfig cfg = sc.mc();
        const double dt = cfg.T / cfg.n_steps;
        std::vector<double> checkpoints;
        for (int k = 0; k <= 4; ++k)
            checkpoints.push_back(dt * std::lround(k * cfg.n_steps / 4.0));
        const MartingaleReport rep = martingale_check(sc.model(), sc.phi(), 0.0, sc.spec().x0,
                                                      sc.mu(), checkpoints, cfg);
        INFO("drift[1..4] = " << rep.drift[1] << " " << rep.drift[2] << " " << rep.drift[3] << " "
                              << rep.drift[4]);
        REQUIRE(rep.n_inner == static_cast<int>(std::lround(std::sqrt(cfg.n_paths))));
        REQUIRE(rep.pass());
    }
    SECTION("nested budget guard") {
        const Scenario sc(mini_ref());
        McConfig cfg = sc.mc();
        cfg.n_paths = 100000000;
        REQUIRE_THROWS_AS(martingale_check(sc.model(), sc.phi(), 0.0, sc.spec().x0, sc.mu(),
                                           {0.0, sc.spec().T / 2}, cfg),
                          config_error);
    }
}

TEST_CASE("Ito residual", "[verification]") {
    const Scenario sc(mini_ref());
    const McConfig cfg = sc.mc();

    SECTION("constant functional is identically zero") {
        const TimeFunctional f(Profile::constant(1.0), constant_phi(sc.grid(), 4.0));
        const ItoReport rep = ito_residual(sc.model(), f, 0.0, sc.spec().x0, sc.mu(), cfg, 0.0);
        REQUIRE(rep.mean_residual == 0.0);
        REQUIRE(rep.std_err == 0.0);
        REQUIRE(rep.pass());
    }
    SECTION("f = x with state-invariant drift telescopes to the noise mean") {
        const TimeFunctional f(Profile::constant(1.0), identity_phi(sc.grid()));
        const ItoReport rep = ito_residual(sc.model(), f, 0.0, sc.spec().x0, sc.mu(), cfg, 0.0);
        // the dr-integral cancels the drift exactly; what is left is the mean
        // of the stochastic integral
        REQUIRE(std::abs(rep.mean_residual) <= 3.0 * rep.std_err);
    }
    SECTION("time-weighted reference functional within budget, bias calibrated in dt") {
        const TimeFunctional f(Profile::sin_profile(1.0), sc.phi());
        const ItoReport r1 = ito_residual(sc.model(), f, 0.0, sc.spec().x0, sc.mu(), cfg, 0.0);
        McConfig half = cfg;
        half.n_steps *= 2;
        const ItoReport r2 = ito_residual(sc.model(), f, 0.0, sc.spec().x0, sc.mu(), half, 0.0);
        const double dt = cfg.T / cfg.n_steps;
        const double c_est = 2.0 * std::abs(r1.mean_residual - r2.mean_residual) / (dt / 2.0);
        INFO("res " << r1.mean_residual << " half-dt " << r2.mean_residual << " c_est " << c_est);
        REQUIRE(std::abs(r1.mean_residual) <= 3.0 * r1.std_err + c_est * dt + 1e-12);
    }
}

TEST_CASE("convergence studies", "[verification]") {
    const Scenario sc(mini_ref());
    const std::vector<double> hs = {0.2, 0.1, 0.05, 0.025};

    SECTION("density derivative rate") {
        const ConvergenceReport rep =
            convergence_study(ConvergenceTarget::density_derivative, sc, hs);
        INFO("errors " << rep.errors[0] << " " << rep.errors[1] << " " << rep.errors[2] << " "
                       << rep.errors[3]);
        REQUIRE_FALSE(rep.fit.floor_limited);
        REQUIRE(rep.pass());
    }
    SECTION("state derivative rate") {
        const ConvergenceReport rep =
            convergence_study(ConvergenceTarget::state_derivative, sc, hs);
        INFO("errors " << rep.errors[0] << " " << rep.errors[1] << " " << rep.errors[2] << " "
                       << rep.errors[3]);
        REQUIRE_FALSE(rep.fit.floor_limited);
        REQUIRE(rep.pass());
    }
    SECTION("value pairing rate or floor") {
        const ConvergenceReport rep =
            convergence_study(ConvergenceTarget::value_mu_pairing, sc, hs);
        INFO("errors " << rep.errors[0] << " " << rep.errors[1] << " " << rep.errors[2] << " "
                       << rep.errors[3]);
        REQUIRE(rep.pass());
    }
    SECTION("constant coefficients put the quotient at the machine floor") {
        // with b1 = sigma1 = 0 the discrete flow is linear in the initial
        // density, so the quotient equals the directional solution exactly;
        // a linear outer map alone is not enough, the second variation keeps
        // the cross term 2 <db/dm, mtilde> mtilde
        ScenarioSpec s = mini_ref();
        s.coeffs.b0 = 0.2;
        s.coeffs.b1 = 0.0;
        s.coeffs.sigma1 = 0.0;
        const Scenario lin(s);
        const ConvergenceReport rep =
            convergence_study(ConvergenceTarget::density_derivative, lin, hs);
        INFO("errors " << rep.errors[0] << " " << rep.errors[3]);
        REQUIRE(rep.fit.floor_limited);
        REQUIRE(rep.pass());

        // linear outer with b1 != 0: genuine O(h), not floor-limited
        ScenarioSpec s2 = mini_ref();
        s2.coeffs.outer_b = ScalarMap(ScalarMap::Kind::linear);
        s2.coeffs.b1 = 0.3;
        s2.coeffs.sigma1 = 0.0;
        const ConvergenceReport rep2 =
            convergence_study(ConvergenceTarget::density_derivative, Scenario(s2), hs);
        REQUIRE_FALSE(rep2.fit.floor_limited);
        REQUIRE(rep2.fit.slope >= 0.7);
        REQUIRE(rep2.fit.slope <= 1.3);
    }
}
