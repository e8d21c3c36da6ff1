#pragma once

#include <cstddef>
#include <vector>

namespace mkv {

/// Uniform grid t_start + k*dt, k = 0..steps.
class TimeGrid {
  public:
    TimeGrid(double t_start, double t_end, std::size_t steps);

    [[nodiscard]] double start() const noexcept { return start_; }
    [[nodiscard]] double end() const noexcept { return end_; }
    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
    [[nodiscard]] std::size_t points() const noexcept { return steps_ + 1; }
    [[nodiscard]] double dt() const noexcept { return dt_; }

    /// Exact at the endpoints; interior nodes are start + k*dt.
    [[nodiscard]] double time(std::size_t k) const noexcept {
        return k == steps_ ? end_ : start_ + static_cast<double>(k) * dt_;
    }

    [[nodiscard]] std::vector<double> times() const;

    /// Index of the node equal to `t` up to 1e-9*dt; throws otherwise.
    [[nodiscard]] std::size_t index_of(double t) const;

    /// Sub-grid [time(first), end] with the same spacing.
    [[nodiscard]] TimeGrid tail(std::size_t first) const;

    /// Same spacing over [t, end]; `t` must be a node.
    [[nodiscard]] TimeGrid tail_from(double t) const { return tail(index_of(t)); }

  private:
    double start_;
    double end_;
    std::size_t steps_;
    double dt_;
};

}  // namespace mkv
