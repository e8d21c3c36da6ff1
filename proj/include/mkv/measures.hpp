#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mkv {

/// Weighted point cloud in R^k. Points are stored row-major in one buffer.
///
/// Invariants: at least one atom, weights nonnegative and summing to one
/// (within 1e-12), every atom of the same dimension.
class EmpiricalMeasure {
  public:
    /// Uniform weights when `weights` is empty; otherwise normalized copies.
    EmpiricalMeasure(std::size_t dim, std::vector<double> points, std::vector<double> weights = {});

    [[nodiscard]] static EmpiricalMeasure from_points(const std::vector<std::vector<double>>& points,
                                                      const std::vector<double>& weights = {});

    [[nodiscard]] static EmpiricalMeasure dirac(std::span<const double> point);

    [[nodiscard]] std::size_t size() const noexcept { return weights_.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::span<const double> point(std::size_t i) const noexcept {
        return {points_.data() + i * dim_, dim_};
    }
    [[nodiscard]] double weight(std::size_t i) const noexcept { return weights_[i]; }
    [[nodiscard]] std::span<const double> weights() const noexcept { return weights_; }
    [[nodiscard]] std::span<const double> flat_points() const noexcept { return points_; }
    [[nodiscard]] bool uniform() const noexcept { return uniform_; }

    /// Marginal on the listed coordinates (same atoms, same weights).
    [[nodiscard]] EmpiricalMeasure project(std::span<const std::size_t> coordinates) const;

    /// Marginal on the leading `count` coordinates.
    [[nodiscard]] EmpiricalMeasure leading(std::size_t count) const;

    [[nodiscard]] std::vector<double> mean() const;

    friend bool operator==(const EmpiricalMeasure&, const EmpiricalMeasure&) = default;

  private:
    std::size_t dim_ = 0;
    std::vector<double> points_;
    std::vector<double> weights_;
    bool uniform_ = true;
};

/// Raw weighted moment E[x_c^order], order in 1..4.
[[nodiscard]] double moment(const EmpiricalMeasure& mu, std::size_t coordinate, int order);

/// Weighted variance of one coordinate.
[[nodiscard]] double central_moment2(const EmpiricalMeasure& mu, std::size_t coordinate);

/// Second moment of the Euclidean norm, integral of |y|^2.
[[nodiscard]] double second_moment_norm(const EmpiricalMeasure& mu);

enum class TransportMethod { quantile, assignment, min_cost_flow, entropic };

[[nodiscard]] std::string to_string(TransportMethod method);

struct TransportResult {
    double distance = 0.0;
    TransportMethod method = TransportMethod::quantile;
    /// Primal minus dual objective for the entropic solver; zero for exact paths.
    double duality_gap = 0.0;
    std::size_t iterations = 0;
};

/// Largest per-side atom count handled by the exact solvers.
inline constexpr std::size_t kExactTransportLimit = 256;

/// Wasserstein-2 distance with the solver chosen by size:
/// 1-D by quantile coupling, up to 256 atoms per side exactly (Hungarian
/// assignment for equal-size uniform clouds, min-cost flow otherwise),
/// entropic regularization above that.
[[nodiscard]] TransportResult wasserstein2_detailed(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

[[nodiscard]] double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Individual solvers, exposed for cross-checking. All return the W2 distance.
[[nodiscard]] double wasserstein2_quantile(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
[[nodiscard]] double wasserstein2_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
[[nodiscard]] double wasserstein2_flow(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
[[nodiscard]] TransportResult wasserstein2_entropic(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                                                    std::optional<double> epsilon = std::nullopt,
                                                    std::size_t max_iterations = 5000);

/// Minimum-cost perfect matching on a dense square cost matrix (row-major).
/// Returns column assigned to each row.
[[nodiscard]] std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

/// Per-coordinate first and second moments of one time slice.
///
/// This is how the shipped coefficients see the conditional law: they depend
/// on the measure only through these summaries (or the full slice measure).
struct SliceStats {
    std::vector<double> state_mean;
    std::vector<double> state_second;  // E[x_i^2]
    std::vector<double> control_mean;
    std::vector<double> control_second;

    [[nodiscard]] double state_variance(std::size_t i) const noexcept {
        return state_second[i] - state_mean[i] * state_mean[i];
    }
};

/// Moments of a joint slice whose leading `state_dim` coordinates are the state.
[[nodiscard]] SliceStats slice_stats(const EmpiricalMeasure& joint, std::size_t state_dim);

/// Pairing of the state-only and state-by-control slices of one scenario.
struct ConditionalSlice {
    EmpiricalMeasure state;
    EmpiricalMeasure joint;
};

}  // namespace mkv
