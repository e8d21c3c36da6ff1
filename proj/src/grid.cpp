#include "mkv/grid.hpp"

#include "mkv/error.hpp"

#include <cmath>
#include <string>

namespace mkv {

TimeGrid::TimeGrid(double t_start, double t_end, std::size_t steps)
    : start_(t_start), end_(t_end), steps_(steps), dt_(0.0) {
    if (steps == 0) {
        throw ConfigError("grid: steps must be positive");
    }
    if (!(t_end > t_start) || !std::isfinite(t_start) || !std::isfinite(t_end)) {
        throw ConfigError("grid: need t_start < t_end");
    }
    dt_ = (t_end - t_start) / static_cast<double>(steps);
}

std::vector<double> TimeGrid::times() const {
    std::vector<double> out(points());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = time(k);
    }
    return out;
}

std::size_t TimeGrid::index_of(double t) const {
    const double position = (t - start_) / dt_;
    const double rounded = std::round(position);
    if (rounded < 0.0 || rounded > static_cast<double>(steps_) || std::abs(position - rounded) > 1e-9) {
        throw ConfigError("grid: time " + std::to_string(t) + " is not a grid node");
    }
    return static_cast<std::size_t>(rounded);
}

TimeGrid TimeGrid::tail(std::size_t first) const {
    if (first >= steps_) {
        throw ConfigError("grid: tail would be empty");
    }
    return TimeGrid(time(first), end_, steps_ - first);
}

}  // namespace mkv
