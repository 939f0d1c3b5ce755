#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "mfsde/errors.hpp"

namespace mfsde {

/// Thomas-algorithm factorization of a tridiagonal system, reusable across
/// many right-hand sides (the kernel solver shares one factorization per step
/// over all y-columns).
class TridiagFactor {
public:
    /// lower[i] multiplies x[i-1] in row i (lower[0] ignored),
    /// upper[i] multiplies x[i+1] in row i (upper[n-1] ignored).
    TridiagFactor(const std::vector<double>& lower, const std::vector<double>& diag,
                  const std::vector<double>& upper)
        : lower_(lower), cp_(diag.size()), inv_denom_(diag.size()) {
        const std::size_t n = diag.size();
        double denom = diag[0];
        if (denom == 0.0 || !std::isfinite(denom))
            throw numerical_error("tridiagonal solve breakdown at row 0");
        inv_denom_[0] = 1.0 / denom;
        cp_[0] = upper[0] * inv_denom_[0];
        for (std::size_t i = 1; i < n; ++i) {
            denom = diag[i] - lower[i] * cp_[i - 1];
            if (denom == 0.0 || !std::isfinite(denom))
                throw numerical_error("tridiagonal solve breakdown at row " + std::to_string(i));
            inv_denom_[i] = 1.0 / denom;
            if (i + 1 < n) cp_[i] = upper[i] * inv_denom_[i];
        }
    }

    /// Solves in place.
    void solve(std::vector<double>& rhs) const {
        const std::size_t n = rhs.size();
        rhs[0] *= inv_denom_[0];
        for (std::size_t i = 1; i < n; ++i)
            rhs[i] = (rhs[i] - lower_[i] * rhs[i - 1]) * inv_denom_[i];
        for (std::size_t i = n - 1; i-- > 0;)
            rhs[i] -= cp_[i] * rhs[i + 1];
    }

private:
    std::vector<double> lower_, cp_, inv_denom_;
};

} // namespace mfsde
