#pragma once

#include <stdexcept>
#include <string>

namespace mkv {

/// Malformed input: bad config, wrong dimensions, out-of-range parameters.
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A problem or policy fails one of the checked structural assumptions.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// The particle scheme produced a non-finite state.
class SimulationError : public std::runtime_error {
  public:
    SimulationError(const std::string& what, std::size_t scenario, std::size_t particle, std::size_t step)
        : std::runtime_error(what + " (scenario " + std::to_string(scenario) + ", particle " +
                             std::to_string(particle) + ", step " + std::to_string(step) + ")"),
          scenario_(scenario),
          particle_(particle),
          step_(step) {}

    [[nodiscard]] std::size_t scenario() const noexcept { return scenario_; }
    [[nodiscard]] std::size_t particle() const noexcept { return particle_; }
    [[nodiscard]] std::size_t step() const noexcept { return step_; }

  private:
    std::size_t scenario_;
    std::size_t particle_;
    std::size_t step_;
};

/// An enumeration or search would exceed its configured size guard.
class GuardError : public std::length_error {
  public:
    using std::length_error::length_error;
};

}  // namespace mkv
