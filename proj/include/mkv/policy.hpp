#pragma once

#include "mkv/measures.hpp"
#include "mkv/problem.hpp"

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mkv {

/// Information available to a control rule.
///  - b_strong: time and the common-noise path (plus conditional-slice moments,
///    which are functions of it)
///  - strong:   additionally the particle's initial state and idiosyncratic
///    noise path; the current state is a functional of those and is exposed
///  - feedback: time, the particle's path summary Phi_t(X), slice moments
enum class InfoClass { b_strong, strong, feedback };

enum class PolicyFamily { constant, piecewise_constant, linear_feedback, table };

[[nodiscard]] std::string to_string(InfoClass info);
[[nodiscard]] std::string to_string(PolicyFamily family);
[[nodiscard]] InfoClass info_class_from_string(const std::string& name);
[[nodiscard]] PolicyFamily policy_family_from_string(const std::string& name);

/// Information of a b-strong control at step k: no particle data at all.
struct BStrongView {
    double t = 0.0;
    std::size_t step = 0;
    std::span<const double> common_history;  // steps 0..k-1, row-major (k x l)
    const SliceStats* slice = nullptr;
};

/// Information of a strong control at step k. Noise histories stop at k-1.
struct StrongView {
    double t = 0.0;
    std::size_t step = 0;
    std::span<const double> initial_state;
    std::span<const double> idio_history;    // k x d
    std::span<const double> common_history;  // k x l
    std::span<const double> state;           // X_{t_k}
    const SliceStats* slice = nullptr;
    double aux_uniform = 0.5;  // external randomization (weak controls)
};

/// Information of a feedback control at step k.
struct FeedbackView {
    double t = 0.0;
    std::size_t step = 0;
    std::span<const double> summary;  // Phi_{t_k}(X)
    const SliceStats* slice = nullptr;
};

using InfoView = std::variant<BStrongView, StrongView, FeedbackView>;

/// Self-contained copy of a view; mutating the source afterwards cannot
/// change what it reports.
class OwnedView {
  public:
    explicit OwnedView(const InfoView& view);
    OwnedView(const OwnedView& other);
    OwnedView& operator=(const OwnedView& other);

    [[nodiscard]] const InfoView& view() const noexcept { return view_; }
    [[nodiscard]] InfoClass info_class() const noexcept;

  private:
    void rebind();

    InfoView view_;
    std::vector<double> common_history_;
    std::vector<double> idio_history_;
    std::vector<double> initial_state_;
    std::vector<double> state_;
    std::vector<double> summary_;
    SliceStats slice_;
    bool has_slice_ = false;
};

/// A parameterized control rule. Parameter layout by family (m = control dim):
///  - constant:           m values, or 1 broadcast to every coordinate
///  - piecewise_constant: segments blocks of the constant layout
///  - linear_feedback:    (k0, k1, k2): u_j = k0 + k1 x_j + k2 mean_j
///  - table:              segments blocks of (k0, k1, k2)
/// A randomized policy carries one extra trailing parameter a and adds
/// a (2 eta - 1), eta uniform per particle and step. Outputs are clipped to U.
struct Policy {
    InfoClass info_class = InfoClass::feedback;
    PolicyFamily family = PolicyFamily::constant;
    std::vector<double> params;
    ControlBox clip{{-1.0}, {1.0}};
    bool randomized = false;
    std::size_t segments = 1;
    double time_lo = 0.0;
    double time_hi = 1.0;

    /// Optional continuation used from `switch_time` on (policy splicing).
    std::shared_ptr<const Policy> continuation;
    double switch_time = std::numeric_limits<double>::infinity();

    [[nodiscard]] const Policy& active(double t) const noexcept;

    /// Number of parameters the family expects, including the randomization.
    [[nodiscard]] std::size_t expected_params() const;

    /// Throws ConfigError on parameter-count mismatches or families the
    /// information class cannot realize.
    void validate() const;

    /// Most permissive information class over this policy and its continuations.
    [[nodiscard]] InfoClass widest_class() const noexcept;

    [[nodiscard]] bool needs_summary() const noexcept;
    [[nodiscard]] bool needs_aux() const noexcept;
};

/// Copy of `head` that hands over to `tail` from `switch_time` on.
[[nodiscard]] Policy splice(const Policy& head, const Policy& tail, double switch_time);

/// Control for `view`, written into `u` (size m). The view type must match the
/// active policy's information class.
void evaluate(const Policy& policy, const InfoView& view, std::span<double> u);

[[nodiscard]] std::vector<double> evaluate(const Policy& policy, const InfoView& view);

/// Tensor grid of parameter vectors, first coordinate varying slowest.
/// Resolution 1 puts the single point at the midpoint of the bounds.
/// Rejects grids with more than 1e6 points.
[[nodiscard]] std::vector<std::vector<double>> family_grid(std::span<const std::pair<double, double>> bounds,
                                                           std::span<const std::size_t> resolution);

/// Uniform resolution for every parameter.
[[nodiscard]] std::vector<std::vector<double>> family_grid(std::span<const std::pair<double, double>> bounds,
                                                           std::size_t resolution);

inline constexpr std::size_t kMaxGridPoints = 1'000'000;

}  // namespace mkv
