#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace mfsde {

struct MeanStdErr {
    double mean = 0.0;
    double std_err = 0.0;
    std::int64_t n = 0;
};

/// Mean and standard error of a sample vector (two-pass).
inline MeanStdErr mean_std_err(const std::vector<double>& x) {
    MeanStdErr r;
    r.n = static_cast<std::int64_t>(x.size());
    if (r.n == 0) return r;
    double s = 0.0;
    for (double v : x) s += v;
    r.mean = s / static_cast<double>(r.n);
    if (r.n < 2) return r;
    double q = 0.0;
    for (double v : x) q += (v - r.mean) * (v - r.mean);
    r.std_err = std::sqrt(q / (static_cast<double>(r.n) * static_cast<double>(r.n - 1)));
    return r;
}

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    bool floor_limited = false; // errors at the noise floor; slope not meaningful
};

/// Least-squares slope of log(err) vs log(h). Errors below `floor` are taken
/// as noise-dominated; if any error sits at the floor the fit is flagged.
inline SlopeFit fit_loglog_slope(const std::vector<double>& h, const std::vector<double>& err,
                                 double floor = 1e-13) {
    SlopeFit f;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (err[i] <= floor || !std::isfinite(err[i])) {
            f.floor_limited = true;
            continue;
        }
        lx.push_back(std::log(h[i]));
        ly.push_back(std::log(err[i]));
    }
    if (lx.size() < 2) {
        f.floor_limited = true;
        return f;
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) { mx += lx[i]; my += ly[i]; }
    mx /= static_cast<double>(lx.size());
    my /= static_cast<double>(lx.size());
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    return f;
}

} // namespace mfsde
