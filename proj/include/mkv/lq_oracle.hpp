#pragma once

#include "mkv/grid.hpp"
#include "mkv/lq_spec.hpp"
#include "mkv/measures.hpp"
#include "mkv/policy.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mkv {

/// Which control class the value function is optimal for. With feedback
/// controls both the variance and the mean channel are controlled; with
/// b-strong controls (one control for the whole population) only the mean is.
enum class RiccatiBranch { feedback, b_strong };

[[nodiscard]] std::string to_string(RiccatiBranch branch);

/// V(t, nu) = P(t) Var(nu) + Pi(t) mean(nu)^2 + r(t), minimized cost:
///   feedback:  -P'  = 2 A P - B^2 P^2 / R + Q,            P(T)  = G
///   b_strong:  -P'  = 2 A P + Q
///   both:      -Pi' = 2 (A + Abar) Pi - B^2 Pi^2 / R + Q + Qbar,  Pi(T) = G + Gbar
///              -r'  = sigma^2 P + sigma0^2 Pi,            r(T)  = 0
/// Gains k_var = -B P / R, k_mean = -B Pi / R; the optimal feedback is
/// u = k_var (x - m) + k_mean m (b_strong: u = k_mean m).
struct RiccatiSolution {
    LqSpec lq;
    RiccatiBranch branch = RiccatiBranch::feedback;
    TimeGrid grid{0.0, 1.0, 1};
    std::vector<double> p, pi, r;
    /// Time derivatives at the nodes, from the right-hand sides.
    std::vector<double> dp, dpi, dr;
    std::vector<double> k_var, k_mean;
    std::size_t substeps = 1;      // RK4 steps per grid interval
    double doubling_change = 0.0;  // sup-norm change when substeps doubled
};

/// Backward RK4 from T; substeps per interval double until doubling changes
/// P, Pi, r by less than 1e-8. Throws ValidationError if |P| or |Pi| > 1e8.
[[nodiscard]] RiccatiSolution solve_riccati(const LqSpec& lq, const TimeGrid& grid,
                                            RiccatiBranch branch = RiccatiBranch::feedback);

/// P(t) Var + Pi(t) m^2 + r(t), linear interpolation between nodes.
[[nodiscard]] double lq_value(const RiccatiSolution& sol, double t, double mean, double variance);

/// Value of the solution at a measure, with cubic Hermite interpolation.
[[nodiscard]] double lq_value_smooth(const RiccatiSolution& sol, double t, const EmpiricalMeasure& nu);

enum class Hamiltonian {
    b_strong,  // inf over one control shared by the whole measure
    feedback,  // inf over a control per atom
};

/// -d_t V - H[V](t, nu) for the quadratic ansatz built from `sol`, with the
/// infimum over controls in closed form and integrals as exact atom sums.
/// d_t V comes from the cubic Hermite interpolant of the node values and
/// derivatives.
[[nodiscard]] double hjb_residual(const LqSpec& lq, const RiccatiSolution& sol, double t, const EmpiricalMeasure& nu,
                                  Hamiltonian hamiltonian);

/// |V(T, nu) - (G Var + (G + Gbar) m^2)|.
[[nodiscard]] double terminal_mismatch(const RiccatiSolution& sol, const EmpiricalMeasure& nu);

/// Copy with P shifted by `delta` at every node (derivatives unchanged), for
/// checking that the residual detects a wrong solution.
[[nodiscard]] RiccatiSolution shifted_p(const RiccatiSolution& sol, double delta);

/// Analytic Lions derivatives of V(t, .) at nu.
struct LionsDerivatives {
    std::vector<double> first;  // d_nu V(nu)(y_i)
    double dy_first = 0.0;      // d_y d_nu V, constant
    double second = 0.0;        // d^2_nu V(y, y'), constant
};

[[nodiscard]] LionsDerivatives lions_derivatives(const RiccatiSolution& sol, double t, const EmpiricalMeasure& nu);

/// Lifted finite-difference check: moving atom i by h changes V by
/// w_i d_nu V(y_i) h; mixed second differences in atoms i, j equal
/// w_i w_j d^2_nu V + [i = j] w_i d_y d_nu V. Returns max absolute errors.
struct LionsCheck {
    double first_error = 0.0;
    double second_error = 0.0;
};

[[nodiscard]] LionsCheck check_lions_derivatives(const RiccatiSolution& sol, double t, const EmpiricalMeasure& nu,
                                                 double h = 1e-3);

/// One random test point of the residual sweep.
struct ResidualSample {
    double t = 0.0;
    double mean = 0.0;
    double variance = 0.0;
    double b_strong = 0.0;          // residual of the b_strong branch under H^B
    double feedback = 0.0;          // residual of the feedback branch under H
    double b_strong_shifted = 0.0;  // same with P + shift
    double feedback_shifted = 0.0;
};

/// Residuals at `points` random (t, nu): t uniform on [t_start, T), nu with
/// `atoms` i.i.d. N(c, s^2) atoms, c ~ U(-1, 1), s ~ U(0.5, 1.5).
[[nodiscard]] std::vector<ResidualSample> hjb_residual_sweep(const LqSpec& lq, const TimeGrid& grid,
                                                             std::size_t points, std::size_t atoms,
                                                             std::uint64_t seed, double shift = 0.1);

/// Optimal feedback as a piecewise-in-time linear rule on the solution grid:
/// u = k_var x + (k_mean - k_var) m, clipped to [-bound, bound].
[[nodiscard]] Policy riccati_policy(const RiccatiSolution& sol, double control_bound = 10.0);

/// Columns t, P, Pi, r, k_var, k_mean.
void write_riccati_csv(const RiccatiSolution& sol, std::ostream& out);

}  // namespace mkv
