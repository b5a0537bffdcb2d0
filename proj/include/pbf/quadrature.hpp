#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "pbf/error.hpp"

namespace pbf {

/// Compact covariate interval with a composite Simpson grid.
struct CovariateSpace {
    double lower = -1.0;
    double upper = 1.0;
    std::size_t gridSize = 2001;

    double length() const noexcept { return upper - lower; }

    void validate() const {
        if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper))
            fail(ErrorCode::DegenerateCovariateSpace, "kl-theory", "covariate space needs lower < upper");
        if (gridSize < 3 || gridSize % 2 == 0)
            fail(ErrorCode::DegenerateCovariateSpace, "kl-theory", "Simpson grid size must be odd and >= 3");
    }
};

/// E_X g(X) = |X|^{-1} * integral of g over the space, X uniform.
template <class G>
double ex(G&& g, const CovariateSpace& space) {
    space.validate();
    const std::size_t n = space.gridSize - 1;
    const double h = space.length() / static_cast<double>(n);
    double acc = 0.0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double x = k == n ? space.upper : space.lower + h * static_cast<double>(k);
        const double v = g(x);
        if (!std::isfinite(v))
            fail(ErrorCode::NonFiniteIntegrand, "kl-theory", "integrand is not finite at x=" + std::to_string(x));
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        acc += w * v;
    }
    return acc * h / 3.0 / space.length();
}

}  // namespace pbf
