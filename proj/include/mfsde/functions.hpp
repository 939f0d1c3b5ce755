#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mfsde {

/// Bounded smooth scalar maps u -> R used as the "outer" part of functional
/// coefficients, e.g. sigma(m) = sigma0 + sigma1 * outer(<h, m>).
/// Each entry knows its first two derivatives and their sup bounds, which is
/// what makes the assumption constants computable.
class ScalarMap {
public:
    enum class Kind { one, linear, tanh_map, sin_map, exp_neg_square };

    explicit ScalarMap(Kind k = Kind::one) : kind_(k) {}
    static ScalarMap parse(const std::string& name) {
        if (name == "one") return ScalarMap(Kind::one);
        if (name == "linear") return ScalarMap(Kind::linear);
        if (name == "tanh") return ScalarMap(Kind::tanh_map);
        if (name == "sin") return ScalarMap(Kind::sin_map);
        if (name == "expnegsq") return ScalarMap(Kind::exp_neg_square);
        throw std::invalid_argument("ScalarMap: unknown map '" + name + "'");
    }

    Kind kind() const { return kind_; }

    double value(double u) const {
        switch (kind_) {
        case Kind::one: return 1.0;
        case Kind::linear: return u;
        case Kind::tanh_map: return std::tanh(u);
        case Kind::sin_map: return std::sin(u);
        case Kind::exp_neg_square: return std::exp(-u * u);
        }
        return 0.0;
    }
    double d1(double u) const {
        switch (kind_) {
        case Kind::one: return 0.0;
        case Kind::linear: return 1.0;
        case Kind::tanh_map: { const double t = std::tanh(u); return 1.0 - t * t; }
        case Kind::sin_map: return std::cos(u);
        case Kind::exp_neg_square: return -2.0 * u * std::exp(-u * u);
        }
        return 0.0;
    }
    double d2(double u) const {
        switch (kind_) {
        case Kind::one: return 0.0;
        case Kind::linear: return 0.0;
        case Kind::tanh_map: { const double t = std::tanh(u); return -2.0 * t * (1.0 - t * t); }
        case Kind::sin_map: return -std::sin(u);
        case Kind::exp_neg_square: return (4.0 * u * u - 2.0) * std::exp(-u * u);
        }
        return 0.0;
    }

    double sup_abs() const {
        switch (kind_) {
        case Kind::one: return 1.0;
        case Kind::linear: return std::numeric_limits<double>::infinity();
        default: return 1.0;
        }
    }
    double sup_d1() const {
        switch (kind_) {
        case Kind::one: return 0.0;
        case Kind::linear: return 1.0;
        case Kind::tanh_map: return 1.0;
        case Kind::sin_map: return 1.0;
        case Kind::exp_neg_square: return std::numbers::sqrt2 * std::exp(-0.5);
        }
        return 0.0;
    }
    double sup_d2() const {
        switch (kind_) {
        case Kind::one: return 0.0;
        case Kind::linear: return 0.0;
        case Kind::tanh_map: return 4.0 / (3.0 * std::sqrt(3.0));
        case Kind::sin_map: return 1.0;
        case Kind::exp_neg_square: return 2.0;
        }
        return 0.0;
    }

    const char* name() const {
        switch (kind_) {
        case Kind::one: return "one";
        case Kind::linear: return "linear";
        case Kind::tanh_map: return "tanh";
        case Kind::sin_map: return "sin";
        case Kind::exp_neg_square: return "expnegsq";
        }
        return "?";
    }

private:
    Kind kind_;
};

/// Analytic x-profiles with two derivatives: the h-functions behind
/// functional coefficients, the spatial factor beta(x) of state-dependent
/// drifts, and the g(x) factor of terminal functionals. Staying analytic
/// (rather than grid-sampled) is what lets a scenario be rebuilt at any
/// resolution for refinement studies.
class Profile {
public:
    enum class Kind { constant, identity, gauss_bump, gauss_pdf, tanh_profile, sin_profile };

    Profile() : kind_(Kind::constant), p0_(1.0), p1_(0.0) {}
    Profile(Kind k, double p0, double p1 = 0.0) : kind_(k), p0_(p0), p1_(p1) {
        if ((k == Kind::gauss_bump || k == Kind::gauss_pdf) && !(p1 > 0.0))
            throw std::invalid_argument("Profile: gaussian width must be positive");
    }

    static Profile constant(double c) { return Profile(Kind::constant, c); }
    static Profile identity() { return Profile(Kind::identity, 0.0); }
    static Profile gauss_bump(double center, double width) {
        return Profile(Kind::gauss_bump, center, width);
    }
    static Profile gauss_pdf(double mean, double std) { return Profile(Kind::gauss_pdf, mean, std); }
    static Profile tanh_profile(double k) { return Profile(Kind::tanh_profile, k); }
    static Profile sin_profile(double k) { return Profile(Kind::sin_profile, k); }

    Kind kind() const { return kind_; }
    double param0() const { return p0_; }
    double param1() const { return p1_; }

    double value(double x) const {
        switch (kind_) {
        case Kind::constant: return p0_;
        case Kind::identity: return x;
        case Kind::gauss_bump: { const double q = (x - p0_) / p1_; return std::exp(-0.5 * q * q); }
        case Kind::gauss_pdf: {
            const double q = (x - p0_) / p1_;
            return std::exp(-0.5 * q * q) / (p1_ * std::sqrt(2.0 * std::numbers::pi));
        }
        case Kind::tanh_profile: return std::tanh(p0_ * x);
        case Kind::sin_profile: return std::sin(p0_ * x);
        }
        return 0.0;
    }
    double d1(double x) const {
        switch (kind_) {
        case Kind::constant: return 0.0;
        case Kind::identity: return 1.0;
        case Kind::gauss_bump: { const double q = (x - p0_) / p1_; return -(q / p1_) * std::exp(-0.5 * q * q); }
        case Kind::gauss_pdf: { const double q = (x - p0_) / p1_; return -(q / p1_) * value(x); }
        case Kind::tanh_profile: { const double t = std::tanh(p0_ * x); return p0_ * (1.0 - t * t); }
        case Kind::sin_profile: return p0_ * std::cos(p0_ * x);
        }
        return 0.0;
    }
    double d2(double x) const {
        switch (kind_) {
        case Kind::constant: return 0.0;
        case Kind::identity: return 0.0;
        case Kind::gauss_bump: {
            const double q = (x - p0_) / p1_;
            return ((q * q - 1.0) / (p1_ * p1_)) * std::exp(-0.5 * q * q);
        }
        case Kind::gauss_pdf: { const double q = (x - p0_) / p1_; return ((q * q - 1.0) / (p1_ * p1_)) * value(x); }
        case Kind::tanh_profile: {
            const double t = std::tanh(p0_ * x);
            return -2.0 * p0_ * p0_ * t * (1.0 - t * t);
        }
        case Kind::sin_profile: return -p0_ * p0_ * std::sin(p0_ * x);
        }
        return 0.0;
    }

    double sup_abs() const {
        switch (kind_) {
        case Kind::constant: return std::abs(p0_);
        case Kind::identity: return std::numeric_limits<double>::infinity();
        case Kind::gauss_bump: return 1.0;
        case Kind::gauss_pdf: return 1.0 / (p1_ * std::sqrt(2.0 * std::numbers::pi));
        case Kind::tanh_profile: return 1.0;
        case Kind::sin_profile: return 1.0;
        }
        return 0.0;
    }
    double sup_d1() const {
        switch (kind_) {
        case Kind::constant: return 0.0;
        case Kind::identity: return 1.0;
        case Kind::gauss_bump: return std::exp(-0.5) / p1_;
        case Kind::gauss_pdf: return std::exp(-0.5) / (p1_ * p1_ * std::sqrt(2.0 * std::numbers::pi));
        case Kind::tanh_profile: return std::abs(p0_);
        case Kind::sin_profile: return std::abs(p0_);
        }
        return 0.0;
    }
    double sup_d2() const {
        switch (kind_) {
        case Kind::constant: return 0.0;
        case Kind::identity: return 0.0;
        case Kind::gauss_bump: return 1.0 / (p1_ * p1_);
        case Kind::gauss_pdf: return 1.0 / (p1_ * p1_ * p1_ * std::sqrt(2.0 * std::numbers::pi));
        case Kind::tanh_profile: return p0_ * p0_ * 4.0 / (3.0 * std::sqrt(3.0));
        case Kind::sin_profile: return p0_ * p0_;
        }
        return 0.0;
    }

    std::string repr() const {
        switch (kind_) {
        case Kind::constant: return "const:" + std::to_string(p0_);
        case Kind::identity: return "id";
        case Kind::gauss_bump: return "gauss:" + std::to_string(p0_) + "," + std::to_string(p1_);
        case Kind::gauss_pdf: return "gausspdf:" + std::to_string(p0_) + "," + std::to_string(p1_);
        case Kind::tanh_profile: return "tanh:" + std::to_string(p0_);
        case Kind::sin_profile: return "sin:" + std::to_string(p0_);
        }
        return "?";
    }

private:
    Kind kind_;
    double p0_, p1_;
};

} // namespace mfsde
