#pragma once

#include "mkv/grid.hpp"
#include "mkv/measures.hpp"
#include "mkv/policy.hpp"
#include "mkv/problem.hpp"
#include "mkv/simulator.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace mkv {

/// Monte Carlo estimate of a reward functional. `mean` averages the
/// within-scenario averages; `std_error` is the standard error of that mean
/// across scenarios (particle level when there is a single scenario).
struct ValueEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t scenarios = 0;
    std::size_t particles = 0;
    std::size_t steps = 0;
    std::uint64_t seed = 0;
    std::vector<double> scenario_means;
};

/// Estimate from per-scenario values that are i.i.d. across scenarios.
[[nodiscard]] ValueEstimate estimate_from_scenarios(std::vector<double> scenario_means, std::size_t particles,
                                                    std::size_t steps, std::uint64_t seed);

/// Estimate from an ensemble's per-particle totals.
[[nodiscard]] ValueEstimate summarize(const ParticleEnsemble& ensemble);

/// J = E[ sum_k L(t_k, ...) dt + g(X_T, mu_T) ] under `policy`.
[[nodiscard]] ValueEstimate estimate_J(const ProblemSpec& spec, const Policy& policy, const TimeGrid& grid,
                                       const SimulationConfig& config);

/// One searched coordinate of the policy parameter vector.
struct ParamRange {
    std::size_t index = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t resolution = 1;
};

/// Search space: the coarse tensor grid over `ranges` (other parameters stay
/// at the base policy's values), then `extra` policies, then `refinements`
/// rounds of coordinate moves of half the previous cell width.
struct FamilySearch {
    Policy base;
    std::vector<ParamRange> ranges;
    std::vector<Policy> extra;
    std::size_t refinements = 3;
    std::size_t max_evaluations = 100000;
};

struct TraceEntry {
    std::size_t index = 0;
    std::string stage;  // "grid", "extra" or "refine"
    std::vector<double> params;
    ValueEstimate estimate;
};

struct SearchResult {
    Policy best;
    ValueEstimate value;
    std::size_t best_index = 0;
    std::vector<TraceEntry> trace;
    bool best_effort = false;  // evaluation budget ran out
};

using PolicyEvaluator = std::function<ValueEstimate(const Policy&)>;

/// Derivative-free search with a caller-supplied evaluator. A candidate
/// replaces the incumbent only when strictly better, so ties go to the
/// earliest candidate.
[[nodiscard]] SearchResult search_policies(const FamilySearch& search, const PolicyEvaluator& evaluate_policy,
                                           Objective objective);

/// search_policies with estimate_J under one shared seed for every candidate.
[[nodiscard]] SearchResult optimize_value(const ProblemSpec& spec, const FamilySearch& search, const TimeGrid& grid,
                                          const SimulationConfig& config);

/// Value restarted at `t_start` from the atoms of `initial`: initial states
/// are resampled from the atoms and the search runs on [t_start, T] with
/// `steps` steps. At t_start = T this is the mean of g over the atoms.
[[nodiscard]] SearchResult value_at_measure(const ProblemSpec& spec, double t_start, const EmpiricalMeasure& initial,
                                            const FamilySearch& search, std::size_t steps,
                                            const SimulationConfig& config);

/// Columns: candidate, stage, p0.., mean, std_error.
void write_trace_csv(const std::vector<TraceEntry>& trace, std::ostream& out);

/// Policy of the search base with `values` written at the searched indices.
[[nodiscard]] Policy with_params(const Policy& base, const std::vector<ParamRange>& ranges,
                                 const std::vector<double>& values);

}  // namespace mkv
