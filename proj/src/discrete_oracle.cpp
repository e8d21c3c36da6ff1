#include "mkv/discrete_oracle.hpp"

#include "mkv/error.hpp"
#include "mkv/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace mkv {

using json = nlohmann::ordered_json;

std::string to_string(DiscreteClass cls) {
    return cls == DiscreteClass::b_strong ? "b-strong" : "feedback";
}

void DiscreteProblem::validate() const {
    if (states == 0 || actions == 0 || outcomes == 0) {
        throw ConfigError("discrete: states, actions and outcomes must be positive");
    }
    if (outcome_probs.size() != outcomes || base.size() != states * actions * outcomes * states ||
        reward.size() != states * actions || terminal.size() != states || initial.size() != states) {
        throw ConfigError("discrete: table sizes do not match the declared dimensions");
    }
    if (!(kappa >= 0.0 && kappa <= 1.0)) {
        throw ConfigError("discrete: kappa must lie in [0, 1]");
    }
    auto check_distribution = [](std::span<const double> p, const std::string& what) {
        double sum = 0.0;
        for (double v : p) {
            if (!(v >= 0.0)) {
                throw ConfigError("discrete: negative or non-finite probability in " + what);
            }
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12) {
            throw ConfigError("discrete: " + what + " sums to " + std::to_string(sum) + ", not 1");
        }
    };
    check_distribution(outcome_probs, "outcome probabilities");
    check_distribution(initial, "initial distribution");
    for (std::size_t row = 0; row < states * actions * outcomes; ++row) {
        check_distribution(std::span<const double>(base).subspan(row * states, states), "a transition row");
    }
}

std::size_t history_nodes(std::size_t outcomes, std::size_t steps) {
    std::size_t total = 0;
    std::size_t level = 1;
    for (std::size_t k = 0; k < steps; ++k) {
        total += level;
        level *= outcomes;
    }
    return total;
}

namespace {

std::size_t level_offset(std::size_t outcomes, std::size_t k) {
    return history_nodes(outcomes, k);
}

std::uint64_t checked_power(std::uint64_t base, std::size_t exponent, std::uint64_t guard, const std::string& what) {
    std::uint64_t out = 1;
    for (std::size_t i = 0; i < exponent; ++i) {
        if (out > guard / std::max<std::uint64_t>(base, 1)) {
            throw GuardError("discrete: " + what + " exceeds the enumeration guard of " + std::to_string(guard));
        }
        out *= base;
    }
    if (out > guard) {
        throw GuardError("discrete: " + what + " exceeds the enumeration guard of " + std::to_string(guard));
    }
    return out;
}

/// Exact forward evaluation over the common-noise tree.
class TreeEvaluator {
  public:
    using Tail = std::function<double(std::size_t history, const std::vector<double>& mu)>;

    TreeEvaluator(const DiscreteProblem& problem, std::size_t split, Tail tail)
        : pb_(problem), split_(split), tail_(std::move(tail)) {}

    /// Value from (k = 0, empty history) with the given per-(node, state) actions.
    double run(const std::vector<std::size_t>& table, const std::vector<double>& mu) {
        table_ = &table;
        return eval(0, 0, mu);
    }

    [[nodiscard]] double normalization_error() const noexcept { return norm_error_; }

  private:
    double eval(std::size_t k, std::size_t history, const std::vector<double>& mu) {
        if (k == split_) {
            return tail_(history, mu);
        }
        const std::size_t s_count = pb_.states;
        const std::size_t node = level_offset(pb_.outcomes, k) + history;
        const auto& table = *table_;
        double stage = 0.0;
        for (std::size_t s = 0; s < s_count; ++s) {
            const std::size_t a = table[node * s_count + s];
            stage += mu[s] * (pb_.reward[s * pb_.actions + a] + pb_.lambda * mu[s]);
        }
        double continuation = 0.0;
        std::vector<double> next(s_count);
        for (std::size_t c = 0; c < pb_.outcomes; ++c) {
            std::fill(next.begin(), next.end(), 0.0);
            for (std::size_t s = 0; s < s_count; ++s) {
                const std::size_t a = table[node * s_count + s];
                for (std::size_t t = 0; t < s_count; ++t) {
                    next[t] += mu[s] * ((1.0 - pb_.kappa) * pb_.transition(s, a, c, t) + pb_.kappa * mu[t]);
                }
            }
            double sum = 0.0;
            for (double v : next) {
                sum += v;
            }
            norm_error_ = std::max(norm_error_, std::abs(sum - 1.0));
            continuation += pb_.outcome_probs[c] * eval(k + 1, history * pb_.outcomes + c, next);
        }
        return stage + continuation;
    }

    const DiscreteProblem& pb_;
    std::size_t split_;
    Tail tail_;
    const std::vector<std::size_t>* table_ = nullptr;
    double norm_error_ = 0.0;
};

double terminal_value(const DiscreteProblem& pb, const std::vector<double>& mu) {
    double v = 0.0;
    for (std::size_t s = 0; s < pb.states; ++s) {
        v += mu[s] * (pb.terminal[s] + pb.lambda_terminal * mu[s]);
    }
    return v;
}

/// Mixed-radix counter over policy tables; last digit fastest, so successive
/// tables increase lexicographically.
class TableCounter {
  public:
    TableCounter(std::size_t nodes, std::size_t states, std::size_t actions, DiscreteClass cls)
        : states_(states), actions_(actions), cls_(cls),
          digits_(cls == DiscreteClass::feedback ? nodes * states : nodes, 0), table_(nodes * states, 0) {}

    [[nodiscard]] const std::vector<std::size_t>& table() const noexcept { return table_; }

    /// Advances; returns false after the last table.
    bool next() {
        for (std::size_t i = digits_.size(); i-- > 0;) {
            if (++digits_[i] < actions_) {
                sync(i);
                return true;
            }
            digits_[i] = 0;
            sync(i);
        }
        return false;
    }

  private:
    void sync(std::size_t digit) {
        if (cls_ == DiscreteClass::feedback) {
            table_[digit] = digits_[digit];
        } else {
            std::fill_n(table_.begin() + static_cast<std::ptrdiff_t>(digit * states_), states_, digits_[digit]);
        }
    }

    std::size_t states_, actions_;
    DiscreteClass cls_;
    std::vector<std::size_t> digits_;
    std::vector<std::size_t> table_;
};

}  // namespace

std::uint64_t policy_count(const DiscreteProblem& problem, DiscreteClass cls, std::size_t steps,
                           std::uint64_t guard) {
    const std::size_t nodes = history_nodes(problem.outcomes, steps);
    const std::size_t digits = cls == DiscreteClass::feedback ? nodes * problem.states : nodes;
    return checked_power(problem.actions, digits, guard, "policy class of " + to_string(cls));
}

double policy_value(const DiscreteProblem& problem, const std::vector<std::size_t>& table,
                    const std::vector<double>& initial, std::size_t steps) {
    if (table.size() != history_nodes(problem.outcomes, steps) * problem.states) {
        throw ConfigError("discrete: policy table has the wrong size");
    }
    TreeEvaluator ev(problem, steps, [&](std::size_t, const std::vector<double>& mu) {
        return terminal_value(problem, mu);
    });
    return ev.run(table, initial);
}

DiscreteSolution exact_value_from(const DiscreteProblem& problem, DiscreteClass cls,
                                  const std::vector<double>& initial, std::size_t steps, std::uint64_t guard) {
    const std::uint64_t count = policy_count(problem, cls, steps, guard);
    const std::size_t nodes = history_nodes(problem.outcomes, steps);
    TreeEvaluator ev(problem, steps, [&](std::size_t, const std::vector<double>& mu) {
        return terminal_value(problem, mu);
    });
    TableCounter counter(nodes, problem.states, problem.actions, cls);
    DiscreteSolution best;
    best.policies = count;
    bool first = true;
    do {
        const double v = ev.run(counter.table(), initial);
        if (first || v > best.value) {
            best.value = v;
            best.table = counter.table();
            first = false;
        }
    } while (counter.next());
    best.max_normalization_error = ev.normalization_error();
    return best;
}

DiscreteSolution exact_value(const DiscreteProblem& problem, DiscreteClass cls, std::uint64_t guard) {
    problem.validate();
    return exact_value_from(problem, cls, problem.initial, problem.horizon, guard);
}

DppCertificate verify_dpp_exact(const DiscreteProblem& problem, std::size_t split, DiscreteClass cls,
                                std::uint64_t guard) {
    problem.validate();
    const std::size_t steps = problem.horizon;
    if (split == 0 || split > steps) {
        throw ConfigError("verify_dpp_exact: split must lie in (0, K]");
    }
    const std::size_t s_count = problem.states;
    const std::size_t head_nodes = history_nodes(problem.outcomes, split);
    const std::size_t all_nodes = history_nodes(problem.outcomes, steps);
    const std::uint64_t heads = policy_count(problem, cls, split, guard);
    const std::size_t tail_digits = (all_nodes - head_nodes) * (cls == DiscreteClass::feedback ? s_count : 1);
    const std::uint64_t tails = checked_power(problem.actions, tail_digits, guard, "tail policy class");
    if (heads > guard / tails) {
        throw GuardError("verify_dpp_exact: " + std::to_string(heads) + " x " + std::to_string(tails) +
                         " tables exceed the enumeration guard of " + std::to_string(guard));
    }

    DppCertificate cert;
    cert.split = split;
    cert.heads = heads;
    cert.tables = heads * tails;

    // Right-hand side: best head followed by the restarted value at each node.
    double tail_norm_error = 0.0;
    TreeEvaluator head_eval(problem, split, [&](std::size_t, const std::vector<double>& mu) {
        const DiscreteSolution sub = exact_value_from(problem, cls, mu, steps - split, guard);
        tail_norm_error = std::max(tail_norm_error, sub.max_normalization_error);
        return sub.value;
    });
    std::vector<double> head_values;
    head_values.reserve(heads);
    TableCounter head_counter(head_nodes, s_count, problem.actions, cls);
    do {
        head_values.push_back(head_eval.run(head_counter.table(), problem.initial));
    } while (head_counter.next());
    cert.rhs = *std::max_element(head_values.begin(), head_values.end());

    // Left-hand side: every full table; its head is the leading block.
    TreeEvaluator full_eval(problem, steps, [&](std::size_t, const std::vector<double>& mu) {
        return terminal_value(problem, mu);
    });
    TableCounter full_counter(all_nodes, s_count, problem.actions, cls);
    bool first = true;
    std::uint64_t index = 0;
    cert.concatenation_excess = -std::numeric_limits<double>::infinity();
    do {
        const double v = full_eval.run(full_counter.table(), problem.initial);
        if (first || v > cert.lhs) {
            cert.lhs = v;
            first = false;
        }
        const std::uint64_t head = index / tails;
        cert.concatenation_excess = std::max(cert.concatenation_excess, v - head_values[head]);
        ++index;
    } while (full_counter.next());

    cert.defect = std::abs(cert.lhs - cert.rhs);
    cert.max_normalization_error =
        std::max({head_eval.normalization_error(), full_eval.normalization_error(), tail_norm_error});
    return cert;
}

DiscreteProblem random_discrete_problem(std::uint64_t seed, std::size_t states, std::size_t actions,
                                        std::size_t outcomes, std::size_t horizon) {
    const RandomStream stream({seed, StreamRole::sampler, 0xD15C, 0});
    std::uint64_t next = 0;
    auto uniform = [&] { return stream.uniform(next++); };
    auto simplex = [&](std::size_t size) {
        std::vector<double> p(size);
        double sum = 0.0;
        for (auto& v : p) {
            v = -std::log(uniform());
            sum += v;
        }
        for (auto& v : p) {
            v /= sum;
        }
        return p;
    };
    DiscreteProblem pb;
    pb.states = states;
    pb.actions = actions;
    pb.outcomes = outcomes;
    pb.horizon = horizon;
    pb.outcome_probs = simplex(outcomes);
    for (std::size_t row = 0; row < states * actions * outcomes; ++row) {
        const auto p = simplex(states);
        pb.base.insert(pb.base.end(), p.begin(), p.end());
    }
    pb.kappa = 0.5 * uniform();
    for (std::size_t i = 0; i < states * actions; ++i) {
        pb.reward.push_back(2.0 * uniform() - 1.0);
    }
    pb.lambda = 2.0 * uniform() - 1.0;
    for (std::size_t s = 0; s < states; ++s) {
        pb.terminal.push_back(2.0 * uniform() - 1.0);
    }
    pb.lambda_terminal = 2.0 * uniform() - 1.0;
    pb.initial = simplex(states);
    pb.validate();
    return pb;
}

DiscreteProblem discrete_problem_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("discrete instance: ") + e.what());
    }
    static const std::set<std::string> allowed = {"schema",  "states",      "actions",  "outcomes",
                                                  "horizon", "outcome_probs", "transitions", "kappa",
                                                  "reward",  "lambda",      "terminal", "lambda_terminal",
                                                  "initial"};
    if (!doc.is_object()) {
        throw ConfigError("discrete instance: expected an object");
    }
    for (const auto& [key, _] : doc.items()) {
        if (allowed.count(key) == 0) {
            throw ConfigError("discrete instance: unknown key '" + key + "'");
        }
    }
    DiscreteProblem pb;
    try {
        pb.states = doc.at("states").get<std::size_t>();
        pb.actions = doc.at("actions").get<std::size_t>();
        pb.outcomes = doc.value("outcomes", std::size_t{1});
        pb.horizon = doc.at("horizon").get<std::size_t>();
        pb.outcome_probs = doc.value("outcome_probs", std::vector<double>{1.0});
        const auto& tr = doc.at("transitions");
        for (std::size_t s = 0; s < pb.states; ++s) {
            for (std::size_t a = 0; a < pb.actions; ++a) {
                for (std::size_t c = 0; c < pb.outcomes; ++c) {
                    const auto row = tr.at(s).at(a).at(c).get<std::vector<double>>();
                    if (row.size() != pb.states) {
                        throw ConfigError("discrete instance: transition row of wrong length");
                    }
                    pb.base.insert(pb.base.end(), row.begin(), row.end());
                }
            }
        }
        pb.kappa = doc.value("kappa", 0.0);
        for (const auto& row : doc.at("reward")) {
            const auto r = row.get<std::vector<double>>();
            if (r.size() != pb.actions) {
                throw ConfigError("discrete instance: reward row of wrong length");
            }
            pb.reward.insert(pb.reward.end(), r.begin(), r.end());
        }
        pb.lambda = doc.value("lambda", 0.0);
        pb.terminal = doc.at("terminal").get<std::vector<double>>();
        pb.lambda_terminal = doc.value("lambda_terminal", 0.0);
        pb.initial = doc.at("initial").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("discrete instance: ") + e.what());
    }
    pb.validate();
    return pb;
}

std::string discrete_problem_to_json(const DiscreteProblem& pb) {
    json doc;
    doc["states"] = pb.states;
    doc["actions"] = pb.actions;
    doc["outcomes"] = pb.outcomes;
    doc["horizon"] = pb.horizon;
    doc["outcome_probs"] = pb.outcome_probs;
    json tr = json::array();
    for (std::size_t s = 0; s < pb.states; ++s) {
        json by_action = json::array();
        for (std::size_t a = 0; a < pb.actions; ++a) {
            json by_outcome = json::array();
            for (std::size_t c = 0; c < pb.outcomes; ++c) {
                json row = json::array();
                for (std::size_t t = 0; t < pb.states; ++t) {
                    row.push_back(pb.transition(s, a, c, t));
                }
                by_outcome.push_back(row);
            }
            by_action.push_back(by_outcome);
        }
        tr.push_back(by_action);
    }
    doc["transitions"] = tr;
    doc["kappa"] = pb.kappa;
    json reward = json::array();
    for (std::size_t s = 0; s < pb.states; ++s) {
        reward.push_back(std::vector<double>(pb.reward.begin() + static_cast<std::ptrdiff_t>(s * pb.actions),
                                             pb.reward.begin() + static_cast<std::ptrdiff_t>((s + 1) * pb.actions)));
    }
    doc["reward"] = reward;
    doc["lambda"] = pb.lambda;
    doc["terminal"] = pb.terminal;
    doc["lambda_terminal"] = pb.lambda_terminal;
    doc["initial"] = pb.initial;
    return doc.dump(2);
}

std::string certificate_json(const DiscreteProblem& problem, DiscreteClass cls, const DiscreteSolution& solution,
                             const DppCertificate& cert) {
    json doc;
    doc["class"] = to_string(cls);
    doc["states"] = problem.states;
    doc["actions"] = problem.actions;
    doc["outcomes"] = problem.outcomes;
    doc["horizon"] = problem.horizon;
    doc["value"] = solution.value;
    doc["policy"] = solution.table;
    doc["policies_enumerated"] = solution.policies;
    doc["dpp"] = {{"split", cert.split},
                  {"lhs", cert.lhs},
                  {"rhs", cert.rhs},
                  {"defect", cert.defect},
                  {"concatenation_excess", cert.concatenation_excess},
                  {"heads", cert.heads},
                  {"tables", cert.tables}};
    doc["max_normalization_error"] = std::max(solution.max_normalization_error, cert.max_normalization_error);
    return doc.dump(2);
}

}  // namespace mkv
