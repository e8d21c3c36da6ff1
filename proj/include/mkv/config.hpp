#pragma once

#include "mkv/discrete_oracle.hpp"
#include "mkv/dpp.hpp"
#include "mkv/grid.hpp"
#include "mkv/lq_spec.hpp"
#include "mkv/policy.hpp"
#include "mkv/problem.hpp"
#include "mkv/simulator.hpp"
#include "mkv/value.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mkv {

inline constexpr std::string_view kConfigSchema = "mkvlab/1";

struct PicardOptions {
    double tol = 1e-4;
    std::size_t max_iter = 15;
};

struct ValidateOptions {
    std::size_t samples = 256;
    std::optional<double> max_lipschitz;
    std::optional<double> max_growth;
};

/// Thresholds for `optimize`; any breach is reported as exit code 4.
struct OptimizeExpect {
    std::optional<std::size_t> param_index;
    double param_target = 0.0;
    double param_tolerance = 0.05;
    std::optional<double> value;  // within 3 se
};

struct DppOptions {
    FamilySearch lhs, outer, inner;
    StoppingRule stopping;
    std::size_t inner_scenarios = 8;
    std::size_t inner_particles = 50;
    bool retry = true;
};

struct OrderingOptions {
    FamilySearch b_strong, strong, weak;
    bool embed = true;
};

struct MarkovOptions {
    UpdatingFunction phi;
    InitialLaw first, second;
    std::size_t atoms = 256;
    double tolerance = 1e-9;
    bool independent_seeds = true;
};

struct LqOptions {
    std::size_t residual_points = 100;
    std::size_t atoms = 64;
    double residual_tolerance = 1e-6;
    double detector_shift = 0.1;
    double detector_threshold = 1e-3;
    bool monte_carlo = true;
};

struct DiscreteOptions {
    std::vector<DiscreteProblem> instances;
    std::vector<std::size_t> splits;  // empty: every split 1..K
    std::vector<DiscreteClass> classes{DiscreteClass::b_strong, DiscreteClass::feedback};
    std::uint64_t guard = 1'000'000;
};

/// One experiment document. Blocks absent from the document stay empty; each
/// subcommand checks for the blocks it needs.
struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::optional<ProblemSpec> problem;
    std::size_t steps = 0;
    SimulationConfig sim;
    std::optional<Policy> policy;
    std::optional<FamilySearch> search;
    std::optional<PicardOptions> picard;
    std::optional<ValidateOptions> validate;
    std::optional<OptimizeExpect> expect;
    std::optional<DppOptions> dpp;
    std::optional<OrderingOptions> ordering;
    std::optional<MarkovOptions> markov;
    std::optional<LqOptions> lq;
    std::optional<DiscreteOptions> discrete;

    /// Grid over [t_start, T] of the problem with `steps` steps.
    [[nodiscard]] TimeGrid grid() const;

    /// Problem, or a ConfigError naming the missing block.
    [[nodiscard]] const ProblemSpec& require_problem() const;
};

/// Parses a configuration document. Unknown keys, missing required fields and
/// out-of-range values raise ConfigError naming the field (e.g. "grid.steps").
/// `seed_override` replaces the document's seed before anything derives from it.
[[nodiscard]] ExperimentConfig parse_config(std::string_view text,
                                            std::optional<std::uint64_t> seed_override = std::nullopt);

[[nodiscard]] std::string read_text_file(const std::filesystem::path& path);

/// Policy as {info_class, family, params, bounds, ...}.
[[nodiscard]] std::string policy_to_json(const Policy& policy);

/// Parses a policy; `bounds` default to `box`.
[[nodiscard]] Policy policy_from_json(std::string_view text, const ControlBox& box);

}  // namespace mkv
