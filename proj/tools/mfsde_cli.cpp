// Command-line front end: parses a scenario config, runs the solvers and
// identity checks, and emits deterministic plot-ready CSV tables.
//
// Exit codes: 0 pass, 1 check failure, 2 numerical error, 3 config error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfsde/mfsde.hpp"

namespace {

using namespace mfsde;

struct CliOptions {
    std::string config;
    std::string scenario = "state-invariant-ref";
    std::string out = ".";
    long long seed = -1;
    int threads = 0;
    int snapshot_every = 0;
    bool write_slices = false;
};

RunConfig load(const CliOptions& o) {
    RunConfig rc;
    if (!o.config.empty())
        rc = load_run_config(o.config);
    else
        rc.scenario = scenario_catalog(o.scenario);
    if (o.seed >= 0) rc.scenario.seed = static_cast<std::uint64_t>(o.seed);
    if (o.threads > 0) rc.scenario.threads = o.threads;
    if (o.snapshot_every > 0) rc.scenario.kernel_snapshot_every = o.snapshot_every;
    std::filesystem::create_directories(o.out);
    return rc;
}

std::string out_path(const CliOptions& o, const std::string& name) {
    return (std::filesystem::path(o.out) / name).string();
}

std::vector<double> default_checkpoints(const ScenarioSpec& s) {
    // five evenly spaced times, snapped onto the solver mesh
    std::vector<double> ck;
    const double dt = (s.T - s.t) / s.n_steps;
    for (int k = 0; k <= 4; ++k)
        ck.push_back(s.t + dt * std::lround(k * s.n_steps / 4.0));
    return ck;
}

int cmd_run_fp(const CliOptions& o) {
    const RunConfig rc = load(o);
    const Scenario sc(rc.scenario);
    const DensityPath path = solve_fp(sc.model(), sc.mu(), rc.scenario.t, rc.scenario.T, sc.fp());
    write_density_path(out_path(o, "density_path.csv"), path, rc.scenario.seed, rc.scenario.name,
                       std::max(1, rc.scenario.kernel_snapshot_every));
    const NormReport rep = norm_report(path);
    CsvWriter w(out_path(o, "norm_report.csv"), rc.scenario.seed, rc.scenario.name);
    w.comment("sup_l2=" + csv_num(rep.sup_l2) + " sup_w12=" + csv_num(rep.sup_w12) +
              " sup_w22=" + csv_num(rep.sup_w22));
    w.comment("holder_quotient=" + csv_num(rep.holder_quotient) +
              " min_value=" + csv_num(rep.min_value));
    w.row({"s", "mass", "l2", "w12", "w22"});
    for (std::size_t j = 0; j < rep.times.size(); ++j)
        w.row({csv_num(rep.times[j]), csv_num(rep.mass[j]), csv_num(rep.l2[j]),
               csv_num(rep.w12[j]), csv_num(rep.w22[j])});
    for (const auto& warn : path.warnings) std::cerr << "warning: " << warn << "\n";
    return 0;
}

int cmd_run_kernel(const CliOptions& o) {
    const RunConfig rc = load(o);
    const Scenario sc(rc.scenario);
    if (!sc.model().state_invariant())
        throw config_error("run-kernel: scenario '" + rc.scenario.name +
                           "' has state-dependent coefficients; the kernel route needs a "
                           "state-invariant model");
    const DensityPath m_path =
        solve_fp(sc.model(), sc.mu(), rc.scenario.t, rc.scenario.T, sc.fp());
    KernelOptions kopts;
    kopts.snapshot_every = rc.scenario.kernel_snapshot_every;
    kopts.threads = rc.scenario.threads;
    const DensityPath h_path = solve_h(sc.model(), m_path);
    write_density_path(out_path(o, "h_path.csv"), h_path, rc.scenario.seed, rc.scenario.name,
                       std::max(1, rc.scenario.kernel_snapshot_every));
    const KernelPath f = solve_fundamental(sc.model(), m_path, kopts);
    const KernelPath g = solve_correction(sc.model(), m_path, f, kopts);
    const KernelPath k = assemble_kernel(f, g);

    // column masses and the kernel/directional agreement on the first direction
    CsvWriter w(out_path(o, "kernel_report.csv"), rc.scenario.seed, rc.scenario.name);
    const Grid1D& grid = sc.grid();
    const int n = grid.n_points();
    const std::vector<double>& kT = k.slice_at_step(k.n_steps());
    w.row({"y", "column_mass_T"});
    for (int l = 0; l < n; ++l) {
        double mass = 0.0;
        for (int i = 0; i < n; ++i)
            mass += quad_weight(grid, i) *
                    kT[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                       static_cast<std::size_t>(l)];
        w.row({csv_num(grid.node(l)), csv_num(mass)});
    }
    if (!sc.directions().empty()) {
        const GridFunction& dir = sc.directions().front();
        const DensityPath mt = solve_directional(sc.model(), m_path, dir, sc.fp());
        GridFunction diff = apply_kernel(k, dir, rc.scenario.T);
        diff -= mt.slice(mt.n_steps());
        w.comment("directional_agreement_rel_l2=" +
                  csv_num(l2_norm(diff) / l2_norm(mt.slice(mt.n_steps()))));
    }
    if (o.write_slices) {
        for (int j : k.stored_steps()) {
            CsvWriter ws(out_path(o, "kernel_s" + std::to_string(j) + ".csv"), rc.scenario.seed,
                         rc.scenario.name);
            const std::vector<double>& K = k.slice_at_step(j);
            auto& os = ws.raw();
            for (int i = 0; i < n; ++i) {
                for (int l = 0; l < n; ++l) {
                    if (l > 0) os << ',';
                    os << csv_num(K[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
                                    static_cast<std::size_t>(l)]);
                }
                os << '\n';
            }
        }
    }
    return 0;
}

int cmd_run_value(const CliOptions& o) {
    const RunConfig rc = load(o);
    const Scenario sc(rc.scenario);
    const McConfig cfg = sc.mc();
    const ValueReport rep = value_report(sc.model(), sc.phi(), rc.scenario.t, rc.scenario.x0,
                                         sc.mu(), cfg, true);
    CsvWriter w(out_path(o, "value_report.csv"), rc.scenario.seed, rc.scenario.name);
    w.row({"key", "value"});
    w.row({"v", csv_num(rep.v)});
    w.row({"v_std_err", csv_num(rep.v_std_err)});
    w.row({"dv_dx", csv_num(rep.dv_dx)});
    w.row({"dv_dx_std_err", csv_num(rep.dv_dx_std_err)});
    w.row({"d2v_dx2", csv_num(rep.d2v_dx2)});
    w.row({"d2v_dx2_std_err", csv_num(rep.d2v_dx2_std_err)});
    w.row({"dv_dt", csv_num(rep.dv_dt)});
    w.row({"dv_dt_std_err", csv_num(rep.dv_dt_std_err)});
    w.row({"n_paths", std::to_string(rep.n_paths)});
    w.row({"n_escaped", std::to_string(rep.n_escaped)});
    w.row({"seed", std::to_string(rep.seed)});
    if (rep.has_dmu)
        write_grid_function(out_path(o, "dv_dmu.csv"), rep.dv_dmu, rc.scenario.seed,
                            rc.scenario.name, "dv_dmu");

    // ensemble summary: per-step mean/variance, quantiles at five checkpoints
    const auto fb = make_flow_bundle(sc.model(), sc.mu(), rc.scenario.t, cfg, false);
    const NoiseBank noise(cfg.seed, cfg.n_paths, cfg.n_steps, fb->m().dt());
    SimOptions opts;
    opts.threads = cfg.threads;
    opts.track_moments = true;
    for (double s : default_checkpoints(rc.scenario))
        opts.checkpoint_steps.push_back(fb->m().index_of_time(s));
    const PathEnsemble xe = simulate_x(sc.model(), fb->prepared(), rc.scenario.t, rc.scenario.x0,
                                       noise, opts);
    CsvWriter ws(out_path(o, "ensemble_stats.csv"), rc.scenario.seed, rc.scenario.name);
    ws.row({"s", "mean", "variance"});
    for (int j = 0; j <= xe.n_steps(); ++j)
        ws.row({csv_num(fb->m().time(j)), csv_num(xe.step_mean[static_cast<std::size_t>(j)]),
                csv_num(xe.step_var[static_cast<std::size_t>(j)])});
    ws.comment("checkpoint quantiles (p10,p50,p90)");
    for (std::size_t k = 0; k < xe.checkpoint_steps.size(); ++k) {
        std::vector<double> v = xe.checkpoint_states[k];
        std::sort(v.begin(), v.end());
        auto q = [&](double p) { return v[static_cast<std::size_t>(p * (v.size() - 1))]; };
        ws.comment("s=" + csv_num(fb->m().time(xe.checkpoint_steps[k])) + " p10=" +
                   csv_num(q(0.1)) + " p50=" + csv_num(q(0.5)) + " p90=" + csv_num(q(0.9)));
    }
    return 0;
}

int cmd_verify(const CliOptions& o) {
    const RunConfig rc = load(o);
    const Scenario sc(rc.scenario);
    const McConfig cfg = sc.mc();
    const ScenarioSpec& s = rc.scenario;
    std::vector<double> checkpoints =
        rc.check.checkpoints.empty() ? default_checkpoints(s) : rc.check.checkpoints;

    CsvWriter w(out_path(o, "verify_summary.csv"), s.seed, s.name);
    w.row({"check", "value", "threshold", "status", "detail"});
    bool all_pass = true;

    // master PDE residual (kernel route); skipped for state-dependent drift
    try {
        const ResidualReport rep = master_pde_residual(sc.model(), sc.phi(), s.t, s.x0, sc.mu(),
                                                       cfg, s.c_est_master);
        const bool ok = rep.pass();
        all_pass = all_pass && ok;
        w.row({"master_pde_residual", csv_num(std::abs(rep.residual)), csv_num(rep.error_budget),
               ok ? "pass" : "fail",
               "terms dt=" + csv_num(rep.term_dt) + " x=" + csv_num(rep.term_x) +
                   " xx=" + csv_num(rep.term_xx) + " mu=" + csv_num(rep.term_mu)});
    } catch (const unsupported_model_error& e) {
        w.row({"master_pde_residual", "", "", "SKIPPED", e.what()});
    }

    {
        const MartingaleReport rep =
            martingale_check(sc.model(), sc.phi(), s.t, s.x0, sc.mu(), checkpoints, cfg);
        double worst = 0.0, worst_thr = 0.0, worst_ratio = -1.0;
        for (std::size_t k = 0; k < rep.drift.size(); ++k) {
            if (rep.std_err[k] == 0.0) continue;
            const double ratio = std::abs(rep.drift[k]) / rep.std_err[k];
            if (ratio > worst_ratio) {
                worst_ratio = ratio;
                worst = std::abs(rep.drift[k]);
                worst_thr = 3.0 * rep.std_err[k];
            }
        }
        const bool ok = rep.pass();
        all_pass = all_pass && ok;
        w.row({"martingale_drift", csv_num(worst), csv_num(worst_thr), ok ? "pass" : "fail",
               std::to_string(rep.times.size()) + " checkpoints, inner=" +
                   std::to_string(rep.n_inner)});
    }

    {
        const TimeFunctional f(Profile::sin_profile(1.0), sc.phi());
        const ItoReport rep = ito_residual(sc.model(), f, s.t, s.x0, sc.mu(), cfg, s.c_est_ito);
        const bool ok = rep.pass();
        all_pass = all_pass && ok;
        w.row({"ito_residual", csv_num(std::abs(rep.mean_residual)), csv_num(rep.budget),
               ok ? "pass" : "fail", "n_paths=" + std::to_string(rep.n_paths)});
    }

    {
        const double err = terminal_condition_check(sc.model(), sc.phi(), s.x0, sc.mu(), cfg);
        const bool ok = err <= 1e-12;
        all_pass = all_pass && ok;
        w.row({"terminal_condition", csv_num(err), csv_num(1e-12), ok ? "pass" : "fail", ""});
    }

    std::cout << (all_pass ? "verify: all checks passed\n" : "verify: FAILURES (see verify_summary.csv)\n");
    return all_pass ? 0 : 1;
}

int cmd_convergence(const CliOptions& o) {
    const RunConfig rc = load(o);
    const Scenario sc(rc.scenario);
    CsvWriter w(out_path(o, "slopes.csv"), rc.scenario.seed, rc.scenario.name);
    w.row({"target", "slope", "floor_limited", "status"});
    bool all_pass = true;
    for (ConvergenceTarget target :
         {ConvergenceTarget::density_derivative, ConvergenceTarget::state_derivative,
          ConvergenceTarget::value_mu_pairing}) {
        const ConvergenceReport rep = convergence_study(target, sc, rc.check.h_values);
        const bool ok = rep.pass();
        all_pass = all_pass && ok;
        w.row({target_name(target), rep.fit.floor_limited ? "" : csv_num(rep.fit.slope),
               rep.fit.floor_limited ? "yes" : "no", ok ? "pass" : "fail"});
        CsvWriter wt(out_path(o, std::string("convergence_") + target_name(target) + ".csv"),
                     rc.scenario.seed, rc.scenario.name);
        wt.row({"h", "error", "floor"});
        for (std::size_t i = 0; i < rep.h_values.size(); ++i)
            wt.row({csv_num(rep.h_values[i]), csv_num(rep.errors[i]), csv_num(rep.floors[i])});
    }
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mean-field state-density flows: FP solver, derivative flows, value function "
                 "and identity checks"};
    app.require_subcommand(1);

    CliOptions o;
    if (const char* env = std::getenv("MF_THREADS")) o.threads = std::atoi(env);

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", o.config, "scenario config file");
        cmd->add_option("--scenario", o.scenario, "catalog scenario name (when no --config)");
        cmd->add_option("--out", o.out, "output directory");
        cmd->add_option("--seed", o.seed, "seed override");
        cmd->add_option("--threads", o.threads, "worker threads (default: MF_THREADS or all cores)");
        cmd->add_option("--snapshot-every", o.snapshot_every, "keep every r-th kernel/density slice");
    };

    CLI::App* run_fp = app.add_subcommand("run-fp", "solve the Fokker-Planck equation");
    add_common(run_fp);
    CLI::App* run_kernel = app.add_subcommand("run-kernel", "solve the derivative kernel k = f + g");
    add_common(run_kernel);
    run_kernel->add_flag("--write-slices", o.write_slices, "write retained kernel slices as CSV");
    CLI::App* run_value = app.add_subcommand("run-value", "evaluate V and its derivatives");
    add_common(run_value);
    CLI::App* verify = app.add_subcommand("verify", "run the verification checks");
    add_common(verify);
    CLI::App* convergence = app.add_subcommand("convergence", "finite-difference rate studies");
    add_common(convergence);

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_fp->parsed()) return cmd_run_fp(o);
        if (run_kernel->parsed()) return cmd_run_kernel(o);
        if (run_value->parsed()) return cmd_run_value(o);
        if (verify->parsed()) return cmd_verify(o);
        if (convergence->parsed()) return cmd_convergence(o);
    } catch (const mfsde::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const mfsde::numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 3;
}
