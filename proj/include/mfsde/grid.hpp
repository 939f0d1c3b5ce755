#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfsde/errors.hpp"

namespace mfsde {

/// Uniform 1-d grid on a truncated interval [x_min, x_max].
class Grid1D {
public:
    Grid1D(double x_min, double x_max, int n_points)
        : x_min_(x_min), x_max_(x_max), n_(n_points) {
        if (n_points < 3)
            throw std::invalid_argument("Grid1D: n_points must be >= 3");
        if (!(x_max > x_min) || !std::isfinite(x_min) || !std::isfinite(x_max))
            throw std::invalid_argument("Grid1D: need finite x_min < x_max");
    }

    double x_min() const { return x_min_; }
    double x_max() const { return x_max_; }
    int n_points() const { return n_; }
    double dx() const { return (x_max_ - x_min_) / (n_ - 1); }
    double node(int i) const { return x_min_ + i * dx(); }

    bool operator==(const Grid1D& o) const {
        return x_min_ == o.x_min_ && x_max_ == o.x_max_ && n_ == o.n_;
    }
    bool operator!=(const Grid1D& o) const { return !(*this == o); }

    /// Grid with the same endpoints and halved spacing (2n-1 nodes).
    Grid1D refined() const { return Grid1D(x_min_, x_max_, 2 * n_ - 1); }

private:
    double x_min_, x_max_;
    int n_;
};

/// Real-valued function sampled at the nodes of a Grid1D.
class GridFunction {
public:
    explicit GridFunction(const Grid1D& grid)
        : grid_(grid), values_(static_cast<std::size_t>(grid.n_points()), 0.0) {}

    GridFunction(const Grid1D& grid, std::vector<double> values)
        : grid_(grid), values_(std::move(values)) {
        if (static_cast<int>(values_.size()) != grid_.n_points())
            throw std::invalid_argument("GridFunction: value count != n_points");
    }

    static GridFunction sample(const Grid1D& grid, const std::function<double(double)>& f) {
        GridFunction u(grid);
        for (int i = 0; i < grid.n_points(); ++i) u.values_[static_cast<std::size_t>(i)] = f(grid.node(i));
        return u;
    }

    const Grid1D& grid() const { return grid_; }
    int size() const { return grid_.n_points(); }
    double operator[](int i) const { return values_[static_cast<std::size_t>(i)]; }
    double& operator[](int i) { return values_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool all_finite() const {
        for (double v : values_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    GridFunction& operator+=(const GridFunction& o) {
        require_same_grid(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    GridFunction& operator-=(const GridFunction& o) {
        require_same_grid(o);
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    GridFunction& operator*=(double c) {
        for (double& v : values_) v *= c;
        return *this;
    }
    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) { return a -= b; }
    friend GridFunction operator*(double c, GridFunction a) { return a *= c; }

    void require_same_grid(const GridFunction& o) const {
        if (grid_ != o.grid_)
            throw std::invalid_argument("GridFunction: grids do not match");
    }

private:
    Grid1D grid_;
    std::vector<double> values_;
};

/// Trapezoid-rule integral over [x_min, x_max].
inline double quadrature(const GridFunction& u) {
    const int n = u.size();
    double s = 0.5 * (u[0] + u[n - 1]);
    for (int i = 1; i < n - 1; ++i) s += u[i];
    return s * u.grid().dx();
}

/// Trapezoid weight of node i (dx in the interior, dx/2 at the ends).
inline double quad_weight(const Grid1D& g, int i) {
    return (i == 0 || i == g.n_points() - 1) ? 0.5 * g.dx() : g.dx();
}

inline double l2_inner(const GridFunction& u, const GridFunction& v) {
    u.require_same_grid(v);
    const int n = u.size();
    double s = 0.5 * (u[0] * v[0] + u[n - 1] * v[n - 1]);
    for (int i = 1; i < n - 1; ++i) s += u[i] * v[i];
    return s * u.grid().dx();
}

inline double l2_norm(const GridFunction& u) { return std::sqrt(l2_inner(u, u)); }

/// Central-difference derivative of order 1..3, second-order accurate in the
/// interior with one-sided second-order stencils at the boundary nodes.
inline GridFunction spatial_derivative(const GridFunction& u, int order) {
    const int n = u.size();
    if (order < 1 || order > 3)
        throw std::invalid_argument("spatial_derivative: order must be in {1,2,3}");
    if (n < order + 2)
        throw std::invalid_argument("spatial_derivative: grid too coarse for order " +
                                    std::to_string(order));
    const double h = u.grid().dx();
    GridFunction d(u.grid());
    switch (order) {
    case 1: {
        const double c = 1.0 / (2.0 * h);
        d[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) * c;
        for (int i = 1; i < n - 1; ++i) d[i] = (u[i + 1] - u[i - 1]) * c;
        d[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) * c;
        break;
    }
    case 2: {
        const double c = 1.0 / (h * h);
        d[0] = (2.0 * u[0] - 5.0 * u[1] + 4.0 * u[2] - u[3]) * c;
        for (int i = 1; i < n - 1; ++i) d[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * c;
        d[n - 1] = (2.0 * u[n - 1] - 5.0 * u[n - 2] + 4.0 * u[n - 3] - u[n - 4]) * c;
        break;
    }
    case 3: {
        const double c = 1.0 / (h * h * h);
        d[0] = (-2.5 * u[0] + 9.0 * u[1] - 12.0 * u[2] + 7.0 * u[3] - 1.5 * u[4]) * c;
        d[1] = (-1.5 * u[0] + 5.0 * u[1] - 6.0 * u[2] + 3.0 * u[3] - 0.5 * u[4]) * c;
        for (int i = 2; i < n - 2; ++i)
            d[i] = 0.5 * (u[i + 2] - 2.0 * u[i + 1] + 2.0 * u[i - 1] - u[i - 2]) * c;
        d[n - 2] = (1.5 * u[n - 1] - 5.0 * u[n - 2] + 6.0 * u[n - 3] - 3.0 * u[n - 4] +
                    0.5 * u[n - 5]) * c;
        d[n - 1] = (2.5 * u[n - 1] - 9.0 * u[n - 2] + 12.0 * u[n - 3] - 7.0 * u[n - 4] +
                    1.5 * u[n - 5]) * c;
        break;
    }
    }
    return d;
}

/// Discrete W^{order,2} norm, order in {0,1,2,3}.
inline double sobolev_norm(const GridFunction& u, int order) {
    if (order < 0 || order > 3)
        throw std::invalid_argument("sobolev_norm: unsupported order " + std::to_string(order));
    if (u.size() < order + 2 && order > 0)
        throw std::invalid_argument("sobolev_norm: grid too coarse");
    double s = l2_inner(u, u);
    GridFunction d = u;
    for (int k = 1; k <= order; ++k) {
        d = spatial_derivative(u, k);
        s += l2_inner(d, d);
    }
    return std::sqrt(s);
}

/// Time-indexed sequence of grid functions on a shared uniform time mesh.
class DensityPath {
public:
    DensityPath(const Grid1D& grid, double t0, double t1, int n_steps)
        : grid_(grid), t0_(t0), t1_(t1), n_steps_(n_steps) {
        if (n_steps < 1) throw std::invalid_argument("DensityPath: n_steps must be >= 1");
        if (!(t1 >= t0)) throw std::invalid_argument("DensityPath: need t0 <= t1");
        slices_.reserve(static_cast<std::size_t>(n_steps) + 1);
    }

    const Grid1D& grid() const { return grid_; }
    double t0() const { return t0_; }
    double t1() const { return t1_; }
    int n_steps() const { return n_steps_; }
    double dt() const { return (t1_ - t0_) / n_steps_; }
    double time(int j) const { return t0_ + j * dt(); }

    void push_slice(GridFunction s) {
        if (s.grid() != grid_) throw std::invalid_argument("DensityPath: slice grid mismatch");
        if (static_cast<int>(slices_.size()) > n_steps_)
            throw std::invalid_argument("DensityPath: too many slices");
        slices_.push_back(std::move(s));
    }

    bool complete() const { return static_cast<int>(slices_.size()) == n_steps_ + 1; }
    const GridFunction& slice(int j) const { return slices_.at(static_cast<std::size_t>(j)); }
    const std::vector<GridFunction>& slices() const { return slices_; }

    /// Index of the mesh node at time s; throws if s is not on the mesh.
    int index_of_time(double s) const {
        const double r = (s - t0_) / dt();
        const int j = static_cast<int>(std::lround(r));
        if (j < 0 || j > n_steps_ || std::abs(r - j) > 1e-8 * (1.0 + std::abs(r)))
            throw std::invalid_argument("DensityPath: time " + std::to_string(s) +
                                        " is not on the mesh");
        return j;
    }
    const GridFunction& at_time(double s) const { return slice(index_of_time(s)); }

    /// Warnings recorded by the solver (e.g. Picard non-convergence).
    std::vector<std::string> warnings;
    /// Smallest nodal value seen across all slices (positivity is monitored,
    /// not enforced; signed inputs are legitimate).
    double min_value = std::numeric_limits<double>::quiet_NaN();

private:
    Grid1D grid_;
    double t0_, t1_;
    int n_steps_;
    std::vector<GridFunction> slices_;
};

} // namespace mfsde
