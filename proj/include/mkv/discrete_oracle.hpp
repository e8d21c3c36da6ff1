#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace mkv {

/// Finite mean-field control problem with common noise, maximized:
///   P(s' | s, a, mu, c) = (1 - kappa) base[s][a][c][s'] + kappa mu(s')
///   running reward      r[s][a] + lambda mu(s)
///   terminal reward     g[s] + lambda_T mu(s)
/// The common outcome c of step k drives the transition from k to k+1.
struct DiscreteProblem {
    std::size_t states = 2;
    std::size_t actions = 2;
    std::size_t outcomes = 1;
    std::size_t horizon = 1;  // K steps
    std::vector<double> outcome_probs;  // C
    std::vector<double> base;           // S * A * C * S
    double kappa = 0.0;
    std::vector<double> reward;         // S * A
    double lambda = 0.0;
    std::vector<double> terminal;       // S
    double lambda_terminal = 0.0;
    std::vector<double> initial;        // S

    [[nodiscard]] double transition(std::size_t s, std::size_t a, std::size_t c, std::size_t next) const noexcept {
        return base[((s * actions + a) * outcomes + c) * states + next];
    }

    /// Sizes, normalization within 1e-12, nonnegativity, kappa in [0, 1].
    void validate() const;
};

/// BStrong: one action per common-noise history node. Feedback: one action
/// per (history node, state). There is no idiosyncratic-noise class: the
/// measure flow integrates the idiosyncratic randomness out.
enum class DiscreteClass { b_strong, feedback };

[[nodiscard]] std::string to_string(DiscreteClass cls);

/// History nodes of a K-step tree with C outcomes: sum_{k<K} C^k, ordered by
/// time then by history read as a base-C number.
[[nodiscard]] std::size_t history_nodes(std::size_t outcomes, std::size_t steps);

/// Size of the policy class, or a GuardError when it exceeds `guard`.
[[nodiscard]] std::uint64_t policy_count(const DiscreteProblem& problem, DiscreteClass cls, std::size_t steps,
                                         std::uint64_t guard = 1'000'000);

struct DiscreteSolution {
    double value = 0.0;
    /// Action per (node, state), node-major; BStrong tables repeat one action.
    std::vector<std::size_t> table;
    std::uint64_t policies = 0;
    double max_normalization_error = 0.0;  // over every propagated distribution
};

/// Exhaustive enumeration of the class from `initial` over `steps` steps.
/// Ties go to the lexicographically smallest table.
[[nodiscard]] DiscreteSolution exact_value(const DiscreteProblem& problem, DiscreteClass cls,
                                           std::uint64_t guard = 1'000'000);

[[nodiscard]] DiscreteSolution exact_value_from(const DiscreteProblem& problem, DiscreteClass cls,
                                                const std::vector<double>& initial, std::size_t steps,
                                                std::uint64_t guard = 1'000'000);

/// Value of one table (node-major actions per state) from `initial`.
[[nodiscard]] double policy_value(const DiscreteProblem& problem, const std::vector<std::size_t>& table,
                                  const std::vector<double>& initial, std::size_t steps);

struct DppCertificate {
    double lhs = 0.0;            // full enumeration
    double rhs = 0.0;            // best head + value restarted at the split
    double defect = 0.0;         // |lhs - rhs|
    /// max over all tables of value(table) - value(head, optimal tail), >= 0
    /// would mean a concatenation lowered the value.
    double concatenation_excess = 0.0;
    std::size_t split = 0;
    std::uint64_t heads = 0;
    std::uint64_t tables = 0;
    double max_normalization_error = 0.0;
};

/// Exact tower check at split k* in (0, K]: the full enumeration against the
/// best head followed by the value restarted from each realized distribution.
[[nodiscard]] DppCertificate verify_dpp_exact(const DiscreteProblem& problem, std::size_t split, DiscreteClass cls,
                                              std::uint64_t guard = 1'000'000);

/// Random instance with Dirichlet-like rows from the counter-based sampler.
[[nodiscard]] DiscreteProblem random_discrete_problem(std::uint64_t seed, std::size_t states, std::size_t actions,
                                                      std::size_t outcomes, std::size_t horizon);

[[nodiscard]] DiscreteProblem discrete_problem_from_json(const std::string& text);
[[nodiscard]] std::string discrete_problem_to_json(const DiscreteProblem& problem);
[[nodiscard]] std::string certificate_json(const DiscreteProblem& problem, DiscreteClass cls,
                                           const DiscreteSolution& solution, const DppCertificate& certificate);

}  // namespace mkv
