#pragma once

#include "mkv/lq_spec.hpp"
#include "mkv/measures.hpp"
#include "mkv/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mkv {

/// One particle's state path sampled on a time grid, row-major.
/// Only nodes 0..current are meaningful during a simulation.
struct PathView {
    std::span<const double> values;
    std::size_t dim = 1;
    std::size_t current = 0;

    [[nodiscard]] std::size_t size() const noexcept { return values.size() / dim; }
    [[nodiscard]] std::span<const double> at(std::size_t k) const noexcept {
        return values.subspan(k * dim, dim);
    }
    [[nodiscard]] std::span<const double> now() const noexcept { return at(current); }
};

/// Measure-flow argument of the coefficients: per-node slice moments plus the
/// current joint (state x control) slice when one is available.
struct FlowView {
    std::span<const SliceStats> stats;
    std::size_t current = 0;
    const EmpiricalMeasure* joint = nullptr;

    [[nodiscard]] const SliceStats& now() const noexcept { return stats[current]; }
};

struct CoefficientArgs {
    double t = 0.0;
    PathView path;
    FlowView flow;
    std::span<const double> control;  // empty for the terminal reward
};

/// Writes b (n), sigma (n x d, row-major) or sigma0 (n x l) into `out`.
using VectorCoefficient = std::function<void(const CoefficientArgs&, std::span<double>)>;
using ScalarCoefficient = std::function<double(const CoefficientArgs&)>;

struct Coefficients {
    VectorCoefficient drift;
    VectorCoefficient diffusion;
    VectorCoefficient common_diffusion;
    ScalarCoefficient running;
    ScalarCoefficient terminal;
};

struct Dimensions {
    std::size_t state = 1;   // n
    std::size_t idio = 1;    // d
    std::size_t common = 0;  // l; 0 means no common noise
    std::size_t control = 1; // m
};

/// Axis-aligned box U with reference point u0 at its center; rho is Euclidean.
class ControlBox {
  public:
    ControlBox(std::vector<double> lo, std::vector<double> hi);

    [[nodiscard]] std::size_t dim() const noexcept { return lo_.size(); }
    [[nodiscard]] const std::vector<double>& lo() const noexcept { return lo_; }
    [[nodiscard]] const std::vector<double>& hi() const noexcept { return hi_; }
    [[nodiscard]] std::vector<double> center() const;
    [[nodiscard]] bool contains(std::span<const double> u) const noexcept;
    void clip(std::span<double> u) const noexcept;
    [[nodiscard]] double distance_to_reference(std::span<const double> u) const noexcept;

  private:
    std::vector<double> lo_;
    std::vector<double> hi_;
};

/// Law of the initial state, optionally preceded by a deterministic history
/// (oldest first, spaced by the run's time step) that updating functions see.
struct InitialLaw {
    enum class Kind { gaussian, dirac, uniform, atoms };

    Kind kind = Kind::dirac;
    std::vector<double> first;   // mean | point | lo
    std::vector<double> second;  // std  | -     | hi
    std::shared_ptr<const EmpiricalMeasure> atoms;
    std::vector<std::vector<double>> history;

    [[nodiscard]] static InitialLaw gaussian(std::vector<double> mean, std::vector<double> std_dev);
    [[nodiscard]] static InitialLaw dirac(std::vector<double> point);
    [[nodiscard]] static InitialLaw uniform(std::vector<double> lo, std::vector<double> hi);
    [[nodiscard]] static InitialLaw from_atoms(EmpiricalMeasure measure);

    [[nodiscard]] std::size_t dim() const;

    /// Draw one initial state from `stream` (draw indices start at zero).
    void sample(const RandomStream& stream, std::span<double> out) const;
};

/// Path summaries Z_t = Phi_t(X). Every summary carries the current state in
/// its leading n coordinates, which keeps each kind an updating function.
struct UpdatingFunction {
    enum class Kind { running_state, running_max, running_average, composite };

    Kind kind = Kind::running_state;

    /// Dimension of the summary space E for an n-dimensional state.
    [[nodiscard]] std::size_t summary_dim(std::size_t n) const noexcept;

    /// Summary at the first node of a path given its history (oldest first).
    void initialize(std::span<const double> x0, const std::vector<std::vector<double>>& history, double dt,
                    std::span<double> out) const;

    /// Advance the summary from node s to node t, given x(s), x(t) and the
    /// elapsed time since the path origin at s and at t.
    void update(std::span<const double> previous, std::span<const double> x_prev, std::span<const double> x_next,
                double elapsed_prev, double elapsed_next, std::span<double> out) const;

    /// Offset of the running max / running average blocks; npos when absent.
    [[nodiscard]] std::size_t max_offset(std::size_t n) const noexcept;
    [[nodiscard]] std::size_t average_offset(std::size_t n) const noexcept;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
};

[[nodiscard]] std::string to_string(UpdatingFunction::Kind kind);
[[nodiscard]] UpdatingFunction::Kind updating_kind_from_string(const std::string& name);

/// Summary path Phi_t(X) on the grid of `times` for a path sampled there
/// (row-major, dim n). Running averages use the trapezoidal rule; at the
/// origin the average equals the state.
[[nodiscard]] std::vector<double> apply_updating(const UpdatingFunction& phi, std::span<const double> times,
                                                 std::span<const double> path, std::size_t n);

enum class Objective { maximize, minimize };

[[nodiscard]] std::string to_string(Objective objective);

struct ProblemSpec {
    std::string name = "problem";
    Dimensions dims;
    double t_start = 0.0;
    double horizon = 1.0;
    ControlBox controls{{-1.0}, {1.0}};
    Coefficients coefficients;
    InitialLaw initial;
    Objective objective = Objective::maximize;
    double p_integrability = 2.0;
    UpdatingFunction summary;
    std::optional<LqSpec> lq;  // set for the Riccati benchmark family

    /// +1 when maximizing, -1 when minimizing.
    [[nodiscard]] double sign() const noexcept { return objective == Objective::maximize ? 1.0 : -1.0; }

    /// True when `a` is strictly preferred to `b` under the objective.
    [[nodiscard]] bool better(double a, double b) const noexcept { return sign() * a > sign() * b; }

    /// Structural checks: dimensions, box, initial law, evaluators present.
    void validate() const;
};

// ---------------------------------------------------------------------------
// Coefficient templates
// ---------------------------------------------------------------------------

/// Constant vector/matrix coefficient.
[[nodiscard]] VectorCoefficient constant_coefficient(std::vector<double> value);

/// b = A x(t) + Abar mean(slice) + B u + c with row-major matrices
/// A, Abar (n x n), B (n x m) and offset c (n).
[[nodiscard]] VectorCoefficient linear_drift(std::size_t n, std::size_t m, std::vector<double> a,
                                             std::vector<double> a_bar, std::vector<double> b,
                                             std::vector<double> offset);

[[nodiscard]] ScalarCoefficient constant_reward(double value);

/// q |x(t)|^2 + q_bar |mean|^2 + r |u - u_ref|^2 + c. With an empty control
/// (terminal use) the control term is dropped.
[[nodiscard]] ScalarCoefficient quadratic_reward(double q, double q_bar, double r, std::vector<double> u_ref,
                                                 double offset = 0.0);

/// Scalar LQ benchmark as a minimization problem with a wide control box.
[[nodiscard]] ProblemSpec make_lq_problem(const LqSpec& lq, InitialLaw initial, double control_bound = 10.0,
                                          std::string name = "lq");

// ---------------------------------------------------------------------------
// Sample-based assumption validators. They certify violations, never
// satisfaction.
// ---------------------------------------------------------------------------

struct NonanticipativityReport {
    double drift = 0.0;
    double diffusion = 0.0;
    double common_diffusion = 0.0;
    double running = 0.0;
    double terminal = 0.0;
    std::size_t samples = 0;

    [[nodiscard]] double max_violation() const noexcept;
};

/// Compares each coefficient on (path, flow) against the same inputs stopped
/// at the evaluation time; reports sup |difference| per coefficient.
[[nodiscard]] NonanticipativityReport validate_nonanticipativity(const ProblemSpec& spec, std::size_t sample_count,
                                                                 std::uint64_t seed);

struct LipschitzReport {
    double constant = 0.0;      // max |d(b,sigma,sigma0)| / (|x-x'| + W2)
    double growth_ratio = 0.0;  // max |(b,sigma,sigma0)|^2 / quadratic bound
    std::size_t pairs_used = 0;
    std::size_t pairs_skipped = 0;
    std::size_t worst_sample = 0;
    double worst_path_distance = 0.0;
    double worst_measure_distance = 0.0;
};

[[nodiscard]] LipschitzReport estimate_lipschitz(const ProblemSpec& spec, std::size_t sample_count,
                                                 std::uint64_t seed);

struct GrowthReport {
    double ratio = 0.0;          // max |(L,g)| / bound
    double squared_ratio = 0.0;  // max |(L,g)|^2 / bound
    std::size_t samples = 0;
};

[[nodiscard]] GrowthReport validate_growth(const ProblemSpec& spec, std::size_t sample_count, std::uint64_t seed);

}  // namespace mkv
