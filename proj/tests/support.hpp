#pragma once

#include "mkv/problem.hpp"

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

namespace mkv::testing {

/// Scalar problem with zero drift and rewards, unit control box and X0 = 0.
/// Tests overwrite the pieces they need.
inline ProblemSpec scalar_spec(double sigma = 0.0, double sigma0 = 0.0) {
    ProblemSpec spec;
    spec.name = "test";
    spec.dims = {1, 1, sigma0 == 0.0 ? std::size_t{0} : std::size_t{1}, 1};
    spec.controls = ControlBox({-1.0}, {1.0});
    spec.initial = InitialLaw::dirac({0.0});
    spec.coefficients.drift = constant_coefficient({0.0});
    spec.coefficients.diffusion = constant_coefficient({sigma});
    spec.coefficients.common_diffusion = sigma0 == 0.0 ? constant_coefficient({}) : constant_coefficient({sigma0});
    spec.coefficients.running = constant_reward(0.0);
    spec.coefficients.terminal = constant_reward(0.0);
    return spec;
}

inline double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance_of(std::span<const double> v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

}  // namespace mkv::testing
