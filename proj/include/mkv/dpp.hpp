#pragma once

#include "mkv/grid.hpp"
#include "mkv/policy.hpp"
#include "mkv/problem.hpp"
#include "mkv/simulator.hpp"
#include "mkv/value.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mkv {

/// Deterministic time, or the first grid node k >= 1 at which a moment of the
/// interaction group's state slice crosses a threshold (capped at T). Both only
/// read common-noise-measurable data.
struct StoppingRule {
    enum class Kind { deterministic, hitting };
    enum class Functional { mean, second_moment };
    enum class Direction { up, down };

    Kind kind = Kind::deterministic;
    double time = 1.0;
    Functional functional = Functional::mean;
    std::size_t coordinate = 0;
    double threshold = 0.0;
    Direction direction = Direction::up;

    [[nodiscard]] static StoppingRule at(double time);
    [[nodiscard]] static StoppingRule hitting(Functional functional, double threshold, Direction direction,
                                              std::size_t coordinate = 0);

    /// Deterministic times must lie in (t_start, T] on a node of `grid`.
    void validate(const TimeGrid& grid) const;

    /// Stopping node for `scenario` of a stored ensemble.
    [[nodiscard]] std::size_t stop_node(const ParticleEnsemble& ensemble, std::size_t scenario) const;

    [[nodiscard]] std::string describe() const;
};

struct DppConfig {
    FamilySearch lhs_search;    // family for V(t, nu)
    FamilySearch outer_search;  // head family on [t, tau]
    FamilySearch inner_search;  // family for the restarted V(tau, mu_tau)
    StoppingRule stopping;
    TimeGrid grid{0.0, 1.0, 1};
    SimulationConfig outer;     // M, N, seed, threads
    std::size_t inner_scenarios = 8;
    std::size_t inner_particles = 50;
    bool retry = true;          // one enlarged rhs search after a family-limited gap
};

/// Per-scenario decomposition of the best rhs candidate.
struct InnerValue {
    std::size_t scenario = 0;
    std::size_t stop_node = 0;
    double stop_time = 0.0;
    double running = 0.0;      // mean over the scenario of the reward on [t, tau]
    double inner = 0.0;        // V(tau, mu_tau) estimate
    double inner_std_error = 0.0;
    std::uint64_t inner_seed = 0;
};

struct DppReport {
    ValueEstimate lhs;
    ValueEstimate rhs;
    double gap = 0.0;          // lhs.mean - rhs.mean
    double signed_gap = 0.0;   // gap oriented so that a family shortfall is positive
    double gap_se = 0.0;
    bool within = false;       // |gap| <= 3 gap_se
    std::string label;         // consistent | family-limited | rhs-exceeds-lhs
    bool retried = false;
    std::vector<double> lhs_params, rhs_params;
    std::size_t lhs_candidates = 0, rhs_candidates = 0;
    std::size_t inner_restarts = 0;
    bool best_effort = false;
    std::vector<InnerValue> inner_values;
};

/// lhs = optimize_value on [t, T]; rhs = sup over the outer family of
/// E[reward on [t, tau] + V(tau, mu_tau)], with V re-optimized per scenario
/// from the realized slice under a fresh seed shared by all outer candidates.
[[nodiscard]] DppReport check_dpp(const ProblemSpec& spec, const DppConfig& config);

/// Label for a signed gap and its standard error.
[[nodiscard]] std::string dpp_label(double signed_gap, double gap_se);

[[nodiscard]] std::string to_json(const DppReport& report, const DppConfig& config);

/// Columns scenario, stop_node, stop_time, running, inner, inner_std_error, inner_seed.
void write_inner_csv(const DppReport& report, std::ostream& out);

// ---------------------------------------------------------------------------

struct OrderingConfig {
    FamilySearch b_strong;
    FamilySearch strong;
    FamilySearch weak;
    TimeGrid grid{0.0, 1.0, 1};
    SimulationConfig sim;
    /// Adds each class's incumbent to the next class's candidates so the
    /// nesting holds exactly under common random numbers.
    bool embed = true;
};

struct OrderingReport {
    SearchResult b_strong, strong, weak;
    bool monotone = false;   // per-seed V_B <= V_S <= V_W in the objective's order
    double collapse_diff = 0.0;  // V_W - V_S
    double collapse_se = 0.0;
    bool collapse = false;       // |collapse_diff| <= 3 collapse_se
};

[[nodiscard]] OrderingReport check_ordering(const ProblemSpec& spec, const OrderingConfig& config);
[[nodiscard]] std::string to_json(const OrderingReport& report, const ProblemSpec& spec);
/// Columns class, mean, std_error, p0...
void write_ordering_csv(const OrderingReport& report, std::ostream& out);

// ---------------------------------------------------------------------------

struct MarkovConfig {
    FamilySearch search;
    TimeGrid grid{0.0, 1.0, 1};
    SimulationConfig sim;
    std::size_t summary_atoms = 256;
    double tolerance = 1e-9;
    bool independent_seeds = false;  // second law simulated under a derived seed
};

struct MarkovReport {
    double summary_w2 = 0.0;
    bool accepted = false;  // pushforwards under Phi agree
    SearchResult first, second;
    double diff = 0.0;
    double se = 0.0;
    bool agree = false;
};

/// Both laws are pushed through Phi at the start time (atoms drawn from the
/// same initial stream); a W2 above tolerance rejects the pair. Otherwise the
/// value is optimized under each law and the two compared.
[[nodiscard]] MarkovReport check_markov_reduction(const ProblemSpec& spec, const UpdatingFunction& phi,
                                                  const InitialLaw& first, const InitialLaw& second,
                                                  const MarkovConfig& config);
[[nodiscard]] std::string to_json(const MarkovReport& report);

// ---------------------------------------------------------------------------

struct RestartReport {
    double switch_time = 0.0;
    ValueEstimate continued;   // reward on [tau, T] of the full run
    ValueEstimate restarted;   // reward of the run restarted at tau
    double diff = 0.0;
    double se = 0.0;
    bool means_agree = false;
    double terminal_w2 = 0.0;  // pooled terminal rewards, full vs restarted
    double w2_threshold = 0.0; // 5 / sqrt(M N)
    bool w2_ok = false;
    std::uint64_t restart_seed = 0;
};

/// Continues a feedback policy past tau in the full run and, separately,
/// restarts it at tau from the realized particle states under fresh noise.
[[nodiscard]] RestartReport check_conditioning_restart(const ProblemSpec& spec, const Policy& policy,
                                                       double switch_time, const TimeGrid& grid,
                                                       const SimulationConfig& sim);
[[nodiscard]] std::string to_json(const RestartReport& report);

struct ConcatenationEntry {
    std::vector<double> outer_params;
    ValueEstimate unspliced;
    ValueEstimate spliced;
    std::vector<double> continuation_params;
    bool ok = false;  // spliced >= unspliced - 3 se in the objective's order
};

/// For each outer policy, the best continuation from `continuation` spliced
/// in at tau, evaluated on the full grid with common random numbers.
[[nodiscard]] std::vector<ConcatenationEntry> check_concatenation(const ProblemSpec& spec,
                                                                  const std::vector<Policy>& outer,
                                                                  const FamilySearch& continuation,
                                                                  double switch_time, const TimeGrid& grid,
                                                                  const SimulationConfig& sim);
[[nodiscard]] std::string to_json(const std::vector<ConcatenationEntry>& entries);

}  // namespace mkv
