#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "mfsde/functions.hpp"
#include "mfsde/grid.hpp"
#include "mfsde/stats.hpp"

namespace mfsde {

/// Bounded smooth functional F(m) = scale * outer(<h, m>) + offset with a
/// grid-sampled test function h in W^{1,2}. The functional derivative is the
/// rank-one map dF/dm(m)(.) = scale * outer'(<h,m>) * h(.).
class SmoothFunctional {
public:
    SmoothFunctional(GridFunction h, ScalarMap outer, double scale = 1.0, double offset = 0.0)
        : h_(std::move(h)), outer_(outer), scale_(scale), offset_(offset) {}

    double inner(const GridFunction& m) const { return l2_inner(h_, m); }
    double value(const GridFunction& m) const { return scale_ * outer_.value(inner(m)) + offset_; }

    /// dF/dm(m) = weight(m) * h.
    double weight(const GridFunction& m) const { return scale_ * outer_.d1(inner(m)); }
    GridFunction derivative(const GridFunction& m) const {
        GridFunction d = h_;
        d *= weight(m);
        return d;
    }

    const GridFunction& h() const { return h_; }
    const ScalarMap& outer() const { return outer_; }
    double scale() const { return scale_; }
    double offset() const { return offset_; }

    double value_bound() const { return std::abs(scale_) * outer_.sup_abs() + std::abs(offset_); }
    double derivative_bound_l2() const { return std::abs(scale_) * outer_.sup_d1() * l2_norm(h_); }

private:
    GridFunction h_;
    ScalarMap outer_;
    double scale_, offset_;
};

/// Parameters of the coefficient family
///   b(x, m)     = beta(x) * (b0 + b1 * outer_b(<h_b, m>)),
///   sigma(x, m) = sigma0 + sigma1 * outer_sigma(<h_sigma, m>),
/// with a = sigma^2 / 2. sigma never depends on x; b does iff beta is
/// non-constant.
struct CoefficientSpec {
    double b0 = 0.0, b1 = 0.0;
    ScalarMap outer_b{ScalarMap::Kind::one};
    Profile h_b = Profile::gauss_bump(0.0, 1.0);
    Profile beta = Profile::constant(1.0);
    double sigma0 = 1.0, sigma1 = 0.0;
    ScalarMap outer_sigma{ScalarMap::Kind::one};
    Profile h_sigma = Profile::gauss_bump(0.0, 1.0);
};

class CoefficientModel {
public:
    /// The two functional coordinates a density enters the coefficients through.
    struct Inputs {
        double sb = 0.0; // <h_b, m>
        double ss = 0.0; // <h_sigma, m>
    };

    /// Sampled h-profiles for one grid; solvers build this once per run.
    struct GridCache {
        GridFunction hb, hs;
    };

    CoefficientModel(CoefficientSpec spec, double gamma, double lip, bool state_invariant)
        : spec_(std::move(spec)), gamma_(gamma), lip_(lip), state_invariant_(state_invariant) {}

    const CoefficientSpec& spec() const { return spec_; }
    bool state_invariant() const { return state_invariant_; }
    double gamma() const { return gamma_; }
    double lip_bound() const { return lip_; }

    GridCache cache_for(const Grid1D& grid) const {
        return GridCache{
            GridFunction::sample(grid, [this](double x) { return spec_.h_b.value(x); }),
            GridFunction::sample(grid, [this](double x) { return spec_.h_sigma.value(x); })};
    }
    Inputs functionals(const GridCache& c, const GridFunction& m) const {
        return Inputs{l2_inner(c.hb, m), l2_inner(c.hs, m)};
    }
    Inputs functionals(const GridFunction& m) const {
        return functionals(cache_for(m.grid()), m);
    }

    double drift_scale(Inputs in) const { return spec_.b0 + spec_.b1 * spec_.outer_b.value(in.sb); }

    double b(double x, Inputs in) const { return spec_.beta.value(x) * drift_scale(in); }
    double b_x(double x, Inputs in) const { return spec_.beta.d1(x) * drift_scale(in); }
    double b_xx(double x, Inputs in) const { return spec_.beta.d2(x) * drift_scale(in); }

    double sigma(double, Inputs in) const {
        return spec_.sigma0 + spec_.sigma1 * spec_.outer_sigma.value(in.ss);
    }
    double sigma_x(double, Inputs) const { return 0.0; }
    double sigma_xx(double, Inputs) const { return 0.0; }

    double a(double x, Inputs in) const { const double s = sigma(x, in); return 0.5 * s * s; }
    double a_x(double, Inputs) const { return 0.0; }
    double a_xx(double, Inputs) const { return 0.0; }
    double a_xxx(double, Inputs) const { return 0.0; }

    /// db/dm(x, m)(.) = db_dm_weight(x, m) * h_b(.), and similarly for sigma, a.
    double db_dm_weight(double x, Inputs in) const {
        return spec_.beta.value(x) * spec_.b1 * spec_.outer_b.d1(in.sb);
    }
    double dsigma_dm_weight(double, Inputs in) const {
        return spec_.sigma1 * spec_.outer_sigma.d1(in.ss);
    }
    double da_dm_weight(double x, Inputs in) const {
        return sigma(x, in) * dsigma_dm_weight(x, in);
    }

    // GridFunction-facing surface
    double eval_b(double x, const GridFunction& m) const { return b(x, functionals(m)); }
    double eval_sigma(double x, const GridFunction& m) const { return sigma(x, functionals(m)); }
    double eval_a(double x, const GridFunction& m) const { return a(x, functionals(m)); }
    GridFunction db_dm(double x, const GridFunction& m) const {
        GridFunction d = GridFunction::sample(m.grid(), [this](double xi) { return spec_.h_b.value(xi); });
        d *= db_dm_weight(x, functionals(m));
        return d;
    }
    GridFunction dsigma_dm(double x, const GridFunction& m) const {
        GridFunction d = GridFunction::sample(m.grid(), [this](double xi) { return spec_.h_sigma.value(xi); });
        d *= dsigma_dm_weight(x, functionals(m));
        return d;
    }
    GridFunction da_dm(double x, const GridFunction& m) const {
        GridFunction d = dsigma_dm(x, m);
        d *= eval_sigma(x, m);
        return d;
    }

private:
    CoefficientSpec spec_;
    double gamma_, lip_;
    bool state_invariant_;
};

namespace detail {

/// Densities used to probe ellipticity and boundedness at construction.
inline std::vector<GridFunction> probe_densities(const Grid1D& grid) {
    std::vector<GridFunction> out;
    out.push_back(GridFunction(grid)); // zero
    auto gauss = [](double mean, double std) {
        return [mean, std](double x) {
            const double q = (x - mean) / std;
            return std::exp(-0.5 * q * q) / (std * std::sqrt(2.0 * std::numbers::pi));
        };
    };
    out.push_back(GridFunction::sample(grid, gauss(0.0, 1.0)));
    out.push_back(GridFunction::sample(grid, gauss(1.0, 0.5)));
    out.push_back(GridFunction::sample(grid, gauss(-1.5, 2.0)));
    // bimodal mixture
    out.push_back(GridFunction::sample(grid, [&](double x) {
        return 0.5 * gauss(-2.0, 0.7)(x) + 0.5 * gauss(2.0, 0.7)(x);
    }));
    // scaled (not a probability density; the flow does not require one)
    GridFunction big = out[1];
    big *= 3.0;
    out.push_back(big);
    GridFunction neg = out[2];
    neg *= -2.0;
    out.push_back(neg);
    return out;
}

inline double finite_or(double v, double fallback) { return std::isfinite(v) ? v : fallback; }

inline CoefficientModel build_model(const CoefficientSpec& spec, const Grid1D& probe_grid) {
    const double sup_outer_s = spec.outer_sigma.sup_abs();
    const double sigma_min = spec.sigma0 - std::abs(spec.sigma1) * sup_outer_s;
    if (!std::isfinite(sup_outer_s) || !(sigma_min > 0.0))
        throw std::invalid_argument(
            "CoefficientModel: need sigma0 - |sigma1|*sup|outer_sigma| > 0 for ellipticity");
    const double gamma = 0.5 * sigma_min * sigma_min;

    // assumption constant L from catalog bounds; h-norms measured on the probe grid
    const GridFunction hb = GridFunction::sample(probe_grid, [&](double x) { return spec.h_b.value(x); });
    const GridFunction hs = GridFunction::sample(probe_grid, [&](double x) { return spec.h_sigma.value(x); });
    const double hb_w12 = sobolev_norm(hb, 1);
    const double hs_w12 = sobolev_norm(hs, 1);
    const double drift_sup = std::abs(spec.b0) + std::abs(spec.b1) * spec.outer_b.sup_abs();
    const double sigma_sup = spec.sigma0 + std::abs(spec.sigma1) * sup_outer_s;
    double lip = 0.0;
    lip = std::max(lip, finite_or(spec.beta.sup_abs() * drift_sup, lip));
    lip = std::max(lip, finite_or(spec.beta.sup_d1() * drift_sup, lip));
    lip = std::max(lip, finite_or(spec.beta.sup_d2() * drift_sup, lip));
    lip = std::max(lip, sigma_sup);
    lip = std::max(lip, finite_or(spec.beta.sup_abs() * std::abs(spec.b1) * spec.outer_b.sup_d1() * hb_w12, lip));
    lip = std::max(lip, std::abs(spec.sigma1) * spec.outer_sigma.sup_d1() * hs_w12);
    // Lipschitz-in-m constants
    lip = std::max(lip, finite_or(spec.beta.sup_abs() * std::abs(spec.b1) * spec.outer_b.sup_d1() * l2_norm(hb), lip));
    lip = std::max(lip, std::abs(spec.sigma1) * spec.outer_sigma.sup_d1() * l2_norm(hs));
    lip = std::max(lip, finite_or(spec.beta.sup_d1() * drift_sup, lip));

    const bool state_invariant = spec.beta.kind() == Profile::Kind::constant &&
                                 spec.beta.param0() == 1.0;
    CoefficientModel model(spec, gamma, lip, state_invariant);

    // probe ellipticity over the canned density set; this guards construction
    // bugs, the inequality itself holds by the catalog structure
    const auto probes = probe_densities(probe_grid);
    for (std::size_t k = 0; k < probes.size(); ++k) {
        const GridFunction& m = probes[k];
        for (double x : {probe_grid.x_min(), 0.0, probe_grid.x_max()}) {
            const double av = model.eval_a(x, m);
            if (!(av >= gamma - 1e-12))
                throw std::invalid_argument(
                    "CoefficientModel: ellipticity probe failed at probe density #" +
                    std::to_string(k) + ", x=" + std::to_string(x) + ": a=" + std::to_string(av) +
                    " < gamma=" + std::to_string(gamma));
        }
    }
    return model;
}

} // namespace detail

/// Model with b and sigma independent of x (beta forced to 1).
inline CoefficientModel make_state_invariant_model(CoefficientSpec spec, const Grid1D& probe_grid) {
    spec.beta = Profile::constant(1.0);
    return detail::build_model(spec, probe_grid);
}

/// Model with x-dependent drift b(x,m) = beta(x) * (b0 + b1 outer(<h_b,m>)).
/// sigma stays state-invariant; with beta == 1 this reduces to the
/// state-invariant model.
inline CoefficientModel make_state_dependent_model(CoefficientSpec spec, const Grid1D& probe_grid) {
    return detail::build_model(spec, probe_grid);
}

enum class CoefficientField { b, sigma };

struct DerivativeCheckReport {
    std::vector<double> h_values;
    std::vector<double> errors; // |quotient - <df/dm, mtilde>| per h
    SlopeFit fit;
};

/// First-order convergence check of the L2 functional derivative:
/// (f(x, m + h mtilde) - f(x, m)) / h -> <df/dm(x,m), mtilde>.
inline DerivativeCheckReport functional_derivative_check(const CoefficientModel& model,
                                                         CoefficientField field, double x,
                                                         const GridFunction& m,
                                                         const GridFunction& mtilde,
                                                         const std::vector<double>& h_values) {
    DerivativeCheckReport rep;
    rep.h_values = h_values;
    const auto cache = model.cache_for(m.grid());
    const auto in0 = model.functionals(cache, m);
    const double base = field == CoefficientField::b ? model.b(x, in0) : model.sigma(x, in0);
    const double pairing =
        field == CoefficientField::b
            ? model.db_dm_weight(x, in0) * l2_inner(cache.hb, mtilde)
            : model.dsigma_dm_weight(x, in0) * l2_inner(cache.hs, mtilde);
    for (double h : h_values) {
        GridFunction mh = mtilde;
        mh *= h;
        mh += m;
        const auto inh = model.functionals(cache, mh);
        const double fh = field == CoefficientField::b ? model.b(x, inh) : model.sigma(x, inh);
        rep.errors.push_back(std::abs((fh - base) / h - pairing));
    }
    rep.fit = fit_loglog_slope(rep.h_values, rep.errors);
    return rep;
}

} // namespace mfsde
