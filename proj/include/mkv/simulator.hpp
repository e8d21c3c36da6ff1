#pragma once

#include "mkv/grid.hpp"
#include "mkv/measures.hpp"
#include "mkv/policy.hpp"
#include "mkv/problem.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mkv {

struct SimulationConfig {
    std::size_t scenarios = 1;  // M
    std::size_t particles = 1;  // N
    std::uint64_t seed = 0;
    std::size_t threads = 1;    // 0 = hardware concurrency
};

/// Outer x inner particle system on a time grid. Array layouts use the global
/// particle index g = scenario * N + particle and K = grid steps:
///   common_noise        (M, K, l)
///   idio_noise          (M*N, K, d)
///   states              (M*N, K+1, n)
///   controls            (M*N, K, m)
///   integrated_control  (M*N, K+1, m)
///   running_reward      (M*N, K)      L * dt per step
///   terminal_reward     (M*N)
///   total_reward        (M*N)         sum of running_reward plus terminal
/// Runs without stored paths keep only the last three arrays.
struct ParticleEnsemble {
    TimeGrid grid{0.0, 1.0, 1};
    Dimensions dims;
    std::size_t scenarios = 0;
    std::size_t particles = 0;
    std::uint64_t seed = 0;

    /// True when all particles formed one interaction group (no common noise).
    bool pooled = false;
    UpdatingFunction summary;
    std::vector<std::vector<double>> history;

    std::vector<double> common_noise;
    std::vector<double> idio_noise;
    std::vector<double> states;
    std::vector<double> controls;
    std::vector<double> integrated_control;
    std::vector<double> running_reward;
    std::vector<double> terminal_reward;
    std::vector<double> total_reward;

    [[nodiscard]] bool has_paths() const noexcept { return !states.empty(); }
    [[nodiscard]] std::size_t steps() const noexcept { return grid.steps(); }
    [[nodiscard]] std::size_t total_particles() const noexcept { return scenarios * particles; }
    [[nodiscard]] std::size_t index(std::size_t scenario, std::size_t particle) const noexcept {
        return scenario * particles + particle;
    }

    [[nodiscard]] std::span<const double> state(std::size_t g, std::size_t k) const noexcept;
    [[nodiscard]] std::span<const double> path(std::size_t g) const noexcept;
    [[nodiscard]] std::span<const double> control(std::size_t g, std::size_t k) const noexcept;
    [[nodiscard]] std::span<const double> integrated(std::size_t g, std::size_t k) const noexcept;
    [[nodiscard]] std::span<const double> idio(std::size_t g, std::size_t k) const noexcept;
    [[nodiscard]] std::span<const double> common(std::size_t scenario, std::size_t k) const noexcept;

    /// Global particle range [first, last) that interacted with `scenario`.
    [[nodiscard]] std::pair<std::size_t, std::size_t> group_of(std::size_t scenario) const noexcept;
};

/// Per-group measure flow, one entry per grid node. Node K pairs the terminal
/// states with the last controls.
struct MeasureFlow {
    std::vector<std::vector<SliceStats>> stats;         // [group][node]
    std::vector<std::vector<EmpiricalMeasure>> joints;  // [group][node]
};

struct SimulationOptions {
    bool store_paths = true;
    /// Replaces draws from the initial law: (M*N, n) row-major. The path
    /// history of the initial law is dropped in that case.
    const std::vector<double>* initial_states = nullptr;
    /// Replaces the interacting measure by a fixed flow (fixed-point iteration).
    const MeasureFlow* frozen = nullptr;
};

/// Euler-Maruyama particle scheme. Deterministic for fixed (seed, M, N, grid,
/// policy) whatever the thread count.
[[nodiscard]] ParticleEnsemble simulate(const ProblemSpec& spec, const Policy& policy, const TimeGrid& grid,
                                        const SimulationConfig& config, const SimulationOptions& options = {});

/// Initial states as the scheme draws them: (M*N, n).
[[nodiscard]] std::vector<double> sample_initial_states(const ProblemSpec& spec, const SimulationConfig& config);

/// Interaction groups are scenarios, except without common noise where the
/// conditional law is the plain law and all particles form one group.
[[nodiscard]] bool pooled_interaction(const ProblemSpec& spec) noexcept;

/// Within-scenario state and state x control slices at node k, one per
/// scenario. Node K uses the controls of the last step.
[[nodiscard]] std::vector<ConditionalSlice> conditional_slices(const ParticleEnsemble& ensemble,
                                                               std::size_t time_index);

/// Measure flow of a stored ensemble, grouped as the scheme grouped it.
[[nodiscard]] MeasureFlow measure_flow(const ParticleEnsemble& ensemble);

/// View of the information `info` allows particle (scenario, particle) at
/// step k. The slice moments are those of the interaction group at t_k.
[[nodiscard]] OwnedView info_views(const ParticleEnsemble& ensemble, InfoClass info, std::size_t scenario,
                                   std::size_t particle, std::size_t step);

struct PicardReport {
    std::vector<double> distances;  // distance between iterates i and i-1
    std::size_t iterations = 0;
    bool converged = false;
};

struct PicardResult {
    ParticleEnsemble ensemble;
    PicardReport report;
};

/// Fixed-point iteration on the measure flow: starts from constant paths with
/// reference controls, re-solves with the flow frozen from the last iterate
/// and the same noise, stops when max_k mean |Y^i_k - Y^(i-1)_k|^2 < tol.
[[nodiscard]] PicardResult picard_solve(const ProblemSpec& spec, const Policy& policy, const TimeGrid& grid,
                                        const SimulationConfig& config, double tol, std::size_t max_iter);

/// Columns scenario, particle, time, x*, u*, A*. Control cells at the last
/// node are empty.
void write_csv(const ParticleEnsemble& ensemble, std::ostream& out);

/// Layout: "MKVENS01", then little-endian uint64 version, M, N, steps, n, d,
/// l, m, seed, flags (bit 0: pooled interaction), float64 t_start, t_end, then the float64 arrays common_noise,
/// idio_noise, states, controls, integrated_control, running_reward,
/// terminal_reward, total_reward, each preceded by its uint64 length.
void write_binary(const ParticleEnsemble& ensemble, std::ostream& out);
[[nodiscard]] ParticleEnsemble read_binary(std::istream& in);

/// Runs fn(0..count-1) on up to `threads` workers; rethrows the exception of
/// the lowest failing index.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& fn);

}  // namespace mkv
