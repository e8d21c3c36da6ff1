#include "mkv/dpp.hpp"

#include "mkv/config.hpp"
#include "mkv/error.hpp"
#include "mkv/io.hpp"
#include "mkv/measures.hpp"
#include "mkv/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

namespace mkv {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kInnerLabel = 0x1AAE;
constexpr std::uint64_t kMarkovLabel = 0x3A4C;
constexpr std::uint64_t kRestartLabel = 0x4E57;

double combined_se(double a, double b) { return std::sqrt(a * a + b * b); }

bool within_three(double diff, double se) { return std::abs(diff) <= 3.0 * se + 1e-12; }

json estimate_json(const ValueEstimate& e) {
    return {{"mean", e.mean},          {"std_error", e.std_error}, {"scenarios", e.scenarios},
            {"particles", e.particles}, {"steps", e.steps},         {"seed", e.seed}};
}

json policy_json(const Policy& p) { return json::parse(policy_to_json(p)); }

json search_json(const FamilySearch& s) {
    json ranges = json::array();
    for (const auto& r : s.ranges) {
        ranges.push_back({{"index", r.index}, {"lo", r.lo}, {"hi", r.hi}, {"resolution", r.resolution}});
    }
    return {{"base", policy_json(s.base)},
            {"ranges", ranges},
            {"extra", s.extra.size()},
            {"refinements", s.refinements},
            {"max_evaluations", s.max_evaluations}};
}

/// Estimate from per-particle values laid out scenario-major, mirroring summarize().
ValueEstimate estimate_from_particles(const std::vector<double>& values, std::size_t scenarios,
                                      std::size_t particles, std::size_t steps, std::uint64_t seed) {
    std::vector<double> means(scenarios, 0.0);
    for (std::size_t s = 0; s < scenarios; ++s) {
        double acc = 0.0;
        for (std::size_t p = 0; p < particles; ++p) {
            acc += values[s * particles + p];
        }
        means[s] = acc / static_cast<double>(particles);
    }
    ValueEstimate e = estimate_from_scenarios(means, particles, steps, seed);
    if (scenarios == 1 && particles > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - e.mean) * (v - e.mean);
        }
        e.std_error = std::sqrt(ss / static_cast<double>(particles - 1) / static_cast<double>(particles));
    }
    return e;
}

EmpiricalMeasure group_slice(const ParticleEnsemble& ens, std::size_t scenario, std::size_t node) {
    const auto [first, last] = ens.group_of(scenario);
    const std::size_t n = ens.dims.state;
    std::vector<double> pts;
    pts.reserve((last - first) * n);
    for (std::size_t g = first; g < last; ++g) {
        const auto x = ens.state(g, node);
        pts.insert(pts.end(), x.begin(), x.end());
    }
    return EmpiricalMeasure(n, std::move(pts));
}

}  // namespace

// ---------------------------------------------------------------------------
// Stopping rules
// ---------------------------------------------------------------------------

StoppingRule StoppingRule::at(double time) {
    StoppingRule r;
    r.kind = Kind::deterministic;
    r.time = time;
    return r;
}

StoppingRule StoppingRule::hitting(Functional functional, double threshold, Direction direction,
                                   std::size_t coordinate) {
    StoppingRule r;
    r.kind = Kind::hitting;
    r.functional = functional;
    r.threshold = threshold;
    r.direction = direction;
    r.coordinate = coordinate;
    return r;
}

void StoppingRule::validate(const TimeGrid& grid) const {
    if (kind == Kind::deterministic) {
        if (!(time > grid.start()) || time > grid.end() + 1e-12) {
            throw ConfigError("stopping: deterministic time must lie in (t, T]");
        }
        (void)grid.index_of(time);
    } else if (!std::isfinite(threshold)) {
        throw ConfigError("stopping: hitting threshold must be finite");
    }
}

std::size_t StoppingRule::stop_node(const ParticleEnsemble& ensemble, std::size_t scenario) const {
    const std::size_t steps = ensemble.steps();
    if (kind == Kind::deterministic) {
        return ensemble.grid.index_of(time);
    }
    if (coordinate >= ensemble.dims.state) {
        throw ConfigError("stopping: coordinate out of range");
    }
    const auto [first, last] = ensemble.group_of(scenario);
    const double count = static_cast<double>(last - first);
    for (std::size_t k = 1; k <= steps; ++k) {
        double acc = 0.0;
        for (std::size_t g = first; g < last; ++g) {
            const double x = ensemble.state(g, k)[coordinate];
            acc += functional == Functional::mean ? x : x * x;
        }
        const double value = acc / count;
        if (direction == Direction::up ? value >= threshold : value <= threshold) {
            return k;
        }
    }
    return steps;
}

std::string StoppingRule::describe() const {
    std::ostringstream os;
    if (kind == Kind::deterministic) {
        os << "deterministic t=" << format_double(time);
    } else {
        os << "hitting " << (functional == Functional::mean ? "mean" : "second-moment") << "[" << coordinate
           << "] " << (direction == Direction::up ? ">=" : "<=") << " " << format_double(threshold);
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// DPP
// ---------------------------------------------------------------------------

std::string dpp_label(double signed_gap, double gap_se) {
    if (within_three(signed_gap, gap_se)) {
        return "consistent";
    }
    return signed_gap > 0.0 ? "family-limited" : "rhs-exceeds-lhs";
}

DppReport check_dpp(const ProblemSpec& spec, const DppConfig& config) {
    spec.validate();
    config.stopping.validate(config.grid);
    if (config.inner_scenarios == 0 || config.inner_particles == 0) {
        throw ConfigError("dpp: inner scenarios and particles must be positive");
    }
    const TimeGrid& grid = config.grid;
    const std::size_t steps = grid.steps();

    DppReport report;
    const SearchResult lhs = optimize_value(spec, config.lhs_search, grid, config.outer);
    report.lhs = lhs.value;
    report.lhs_params = lhs.best.params;
    report.lhs_candidates = lhs.trace.size();
    report.best_effort = lhs.best_effort;

    // One entry per rhs evaluation; evaluation order equals trace order.
    std::vector<std::vector<InnerValue>> details;
    bool inner_best_effort = false;
    auto rhs_value = [&](const Policy& policy) {
        const ParticleEnsemble ens = simulate(spec, policy, grid, config.outer);
        const std::size_t m_scen = ens.scenarios;
        const std::size_t n_part = ens.particles;
        std::vector<InnerValue> rows(m_scen);
        std::vector<EmpiricalMeasure> measures;
        measures.reserve(m_scen);
        for (std::size_t j = 0; j < m_scen; ++j) {
            InnerValue& row = rows[j];
            row.scenario = j;
            row.stop_node = config.stopping.stop_node(ens, j);
            row.stop_time = grid.time(row.stop_node);
            double acc = 0.0;
            for (std::size_t p = 0; p < n_part; ++p) {
                const std::size_t g = ens.index(j, p);
                for (std::size_t k = 0; k < row.stop_node; ++k) {
                    acc += ens.running_reward[g * steps + k];
                }
            }
            row.running = acc / static_cast<double>(n_part);
            row.inner_seed = derive_seed(config.outer.seed, kInnerLabel, j);
            measures.push_back(group_slice(ens, j, row.stop_node));
        }
        std::vector<char> flagged(m_scen, 0);
        parallel_for(m_scen, config.outer.threads, [&](std::size_t j) {
            InnerValue& row = rows[j];
            const SimulationConfig inner{config.inner_scenarios, config.inner_particles, row.inner_seed, 1};
            const SearchResult v = value_at_measure(spec, row.stop_time, measures[j], config.inner_search,
                                                    steps - row.stop_node, inner);
            row.inner = v.value.mean;
            row.inner_std_error = v.value.std_error;
            flagged[j] = v.best_effort ? 1 : 0;
        });
        std::vector<double> totals(m_scen);
        for (std::size_t j = 0; j < m_scen; ++j) {
            totals[j] = rows[j].running + rows[j].inner;
            inner_best_effort = inner_best_effort || flagged[j] != 0;
        }
        details.push_back(std::move(rows));
        return estimate_from_scenarios(std::move(totals), n_part, steps, config.outer.seed);
    };

    const double sign = spec.sign();
    auto run_rhs = [&](const FamilySearch& search) {
        details.clear();
        const SearchResult rhs = search_policies(search, rhs_value, spec.objective);
        report.rhs = rhs.value;
        report.rhs_params = rhs.best.params;
        report.rhs_candidates = rhs.trace.size();
        report.inner_restarts = rhs.trace.size() * config.outer.scenarios;
        report.inner_values = details.at(rhs.best_index);
        report.best_effort = report.best_effort || rhs.best_effort;
        report.gap = report.lhs.mean - report.rhs.mean;
        report.signed_gap = sign * report.gap;
        report.gap_se = combined_se(report.lhs.std_error, report.rhs.std_error);
    };

    run_rhs(config.outer_search);
    if (config.retry && report.signed_gap > 3.0 * report.gap_se + 1e-12 && !config.outer_search.ranges.empty()) {
        FamilySearch enlarged = config.outer_search;
        enlarged.refinements += 1;
        run_rhs(enlarged);
        report.retried = true;
    }
    report.best_effort = report.best_effort || inner_best_effort;
    report.within = within_three(report.gap, report.gap_se);
    report.label = dpp_label(report.signed_gap, report.gap_se);
    return report;
}

std::string to_json(const DppReport& report, const DppConfig& config) {
    json doc;
    doc["lhs"] = estimate_json(report.lhs);
    doc["rhs"] = estimate_json(report.rhs);
    doc["gap"] = report.gap;
    doc["signed_gap"] = report.signed_gap;
    doc["gap_se"] = report.gap_se;
    doc["within_3se"] = report.within;
    doc["label"] = report.label;
    doc["retried"] = report.retried;
    doc["best_effort"] = report.best_effort;
    doc["lhs_params"] = report.lhs_params;
    doc["rhs_params"] = report.rhs_params;
    doc["stopping"] = config.stopping.describe();
    doc["grid"] = {{"t_start", config.grid.start()}, {"t_end", config.grid.end()}, {"steps", config.grid.steps()}};
    doc["budget"] = {{"outer_scenarios", config.outer.scenarios},
                     {"outer_particles", config.outer.particles},
                     {"inner_scenarios", config.inner_scenarios},
                     {"inner_particles", config.inner_particles},
                     {"lhs_candidates", report.lhs_candidates},
                     {"rhs_candidates", report.rhs_candidates},
                     {"inner_restarts", report.inner_restarts}};
    doc["seed"] = config.outer.seed;
    doc["lhs_search"] = search_json(config.lhs_search);
    doc["outer_search"] = search_json(config.outer_search);
    doc["inner_search"] = search_json(config.inner_search);
    return doc.dump(2);
}

void write_inner_csv(const DppReport& report, std::ostream& out) {
    CsvWriter csv(out);
    const std::vector<std::string> header = {"scenario", "stop_node", "stop_time", "running",
                                             "inner",    "inner_std_error", "inner_seed"};
    csv.row(header);
    for (const auto& r : report.inner_values) {
        csv.field(std::uint64_t{r.scenario})
            .field(std::uint64_t{r.stop_node})
            .field(r.stop_time)
            .field(r.running)
            .field(r.inner)
            .field(r.inner_std_error)
            .field(hex64(r.inner_seed))
            .end_row();
    }
}

// ---------------------------------------------------------------------------
// Ordering
// ---------------------------------------------------------------------------

OrderingReport check_ordering(const ProblemSpec& spec, const OrderingConfig& config) {
    OrderingReport report;
    report.b_strong = optimize_value(spec, config.b_strong, config.grid, config.sim);
    FamilySearch strong = config.strong;
    if (config.embed) {
        strong.extra.push_back(report.b_strong.best);
    }
    report.strong = optimize_value(spec, strong, config.grid, config.sim);
    FamilySearch weak = config.weak;
    if (config.embed) {
        weak.extra.push_back(report.strong.best);
    }
    report.weak = optimize_value(spec, weak, config.grid, config.sim);
    const double b = report.b_strong.value.mean;
    const double s = report.strong.value.mean;
    const double w = report.weak.value.mean;
    report.monotone = !spec.better(b, s) && !spec.better(s, w);
    report.collapse_diff = w - s;
    report.collapse_se = combined_se(report.strong.value.std_error, report.weak.value.std_error);
    report.collapse = within_three(report.collapse_diff, report.collapse_se);
    return report;
}

std::string to_json(const OrderingReport& report, const ProblemSpec& spec) {
    json doc;
    doc["objective"] = to_string(spec.objective);
    auto entry = [](const SearchResult& r) {
        return json{{"value", estimate_json(r.value)},
                    {"policy", policy_json(r.best)},
                    {"candidates", r.trace.size()},
                    {"best_effort", r.best_effort}};
    };
    doc["b_strong"] = entry(report.b_strong);
    doc["strong"] = entry(report.strong);
    doc["weak"] = entry(report.weak);
    doc["monotone"] = report.monotone;
    doc["collapse"] = {{"diff", report.collapse_diff}, {"se", report.collapse_se}, {"within_3se", report.collapse}};
    return doc.dump(2);
}

void write_ordering_csv(const OrderingReport& report, std::ostream& out) {
    std::size_t width = std::max({report.b_strong.best.params.size(), report.strong.best.params.size(),
                                  report.weak.best.params.size()});
    CsvWriter csv(out);
    csv.field("class").field("mean").field("std_error");
    for (std::size_t i = 0; i < width; ++i) {
        csv.field("p" + std::to_string(i));
    }
    csv.end_row();
    auto row = [&](const std::string& name, const SearchResult& r) {
        csv.field(name).field(r.value.mean).field(r.value.std_error);
        for (std::size_t i = 0; i < width; ++i) {
            if (i < r.best.params.size()) {
                csv.field(r.best.params[i]);
            } else {
                csv.empty();
            }
        }
        csv.end_row();
    };
    row("b-strong", report.b_strong);
    row("strong", report.strong);
    row("weak", report.weak);
}

// ---------------------------------------------------------------------------
// Markovian reduction
// ---------------------------------------------------------------------------

MarkovReport check_markov_reduction(const ProblemSpec& spec, const UpdatingFunction& phi, const InitialLaw& first,
                                    const InitialLaw& second, const MarkovConfig& config) {
    const std::size_t n = spec.dims.state;
    if (first.dim() != n || second.dim() != n) {
        throw ConfigError("markov: initial laws must match the state dimension");
    }
    const std::size_t atoms = std::clamp<std::size_t>(config.summary_atoms, 1, kExactTransportLimit);
    const std::size_t e_dim = phi.summary_dim(n);
    const double dt = config.grid.dt();
    auto pushforward = [&](const InitialLaw& law) {
        std::vector<double> pts(atoms * e_dim);
        std::vector<double> x0(n);
        for (std::size_t i = 0; i < atoms; ++i) {
            const RandomStream stream({config.sim.seed, StreamRole::initial, 0, static_cast<std::uint32_t>(i)});
            law.sample(stream, x0);
            phi.initialize(x0, law.history, dt, std::span<double>(pts).subspan(i * e_dim, e_dim));
        }
        return EmpiricalMeasure(e_dim, std::move(pts));
    };
    MarkovReport report;
    report.summary_w2 = wasserstein2(pushforward(first), pushforward(second));
    report.accepted = report.summary_w2 < config.tolerance;
    if (!report.accepted) {
        return report;
    }
    ProblemSpec a = spec;
    a.initial = first;
    a.summary = phi;
    ProblemSpec b = spec;
    b.initial = second;
    b.summary = phi;
    SimulationConfig sim_b = config.sim;
    if (config.independent_seeds) {
        sim_b.seed = derive_seed(config.sim.seed, kMarkovLabel);
    }
    report.first = optimize_value(a, config.search, config.grid, config.sim);
    report.second = optimize_value(b, config.search, config.grid, sim_b);
    report.diff = report.second.value.mean - report.first.value.mean;
    report.se = combined_se(report.first.value.std_error, report.second.value.std_error);
    report.agree = within_three(report.diff, report.se);
    return report;
}

std::string to_json(const MarkovReport& report) {
    json doc;
    doc["summary_w2"] = report.summary_w2;
    doc["accepted"] = report.accepted;
    if (report.accepted) {
        doc["first"] = {{"value", estimate_json(report.first.value)}, {"policy", policy_json(report.first.best)}};
        doc["second"] = {{"value", estimate_json(report.second.value)}, {"policy", policy_json(report.second.best)}};
        doc["diff"] = report.diff;
        doc["se"] = report.se;
        doc["within_3se"] = report.agree;
    }
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Conditioning and concatenation
// ---------------------------------------------------------------------------

RestartReport check_conditioning_restart(const ProblemSpec& spec, const Policy& policy, double switch_time,
                                         const TimeGrid& grid, const SimulationConfig& sim) {
    if (policy.widest_class() != InfoClass::feedback || policy.info_class != InfoClass::feedback) {
        throw ConfigError("restart: the policy must be a feedback policy");
    }
    if (spec.summary.kind != UpdatingFunction::Kind::running_state) {
        throw ConfigError("restart: only the running-state summary is carried by a restart");
    }
    const std::size_t k0 = grid.index_of(switch_time);
    const std::size_t steps = grid.steps();
    if (k0 == 0 || k0 >= steps) {
        throw ConfigError("restart: switch time must be an interior grid node");
    }
    const ParticleEnsemble full = simulate(spec, policy, grid, sim);
    const std::size_t total = full.total_particles();
    const std::size_t n = spec.dims.state;
    std::vector<double> continued(total);
    std::vector<double> initial(total * n);
    for (std::size_t g = 0; g < total; ++g) {
        double acc = 0.0;
        for (std::size_t k = k0; k < steps; ++k) {
            acc += full.running_reward[g * steps + k];
        }
        continued[g] = acc + full.terminal_reward[g];
        const auto x = full.state(g, k0);
        std::copy(x.begin(), x.end(), initial.begin() + static_cast<std::ptrdiff_t>(g * n));
    }

    RestartReport report;
    report.switch_time = grid.time(k0);
    report.restart_seed = derive_seed(sim.seed, kRestartLabel);
    ProblemSpec restarted = spec;
    restarted.t_start = grid.time(k0);
    SimulationConfig restart_sim = sim;
    restart_sim.seed = report.restart_seed;
    SimulationOptions options;
    options.store_paths = false;
    options.initial_states = &initial;
    const ParticleEnsemble tail = simulate(restarted, policy, grid.tail(k0), restart_sim, options);

    report.continued = estimate_from_particles(continued, sim.scenarios, sim.particles, steps - k0, sim.seed);
    report.restarted = summarize(tail);
    report.diff = report.restarted.mean - report.continued.mean;
    report.se = combined_se(report.continued.std_error, report.restarted.std_error);
    report.means_agree = within_three(report.diff, report.se);
    report.terminal_w2 = wasserstein2(EmpiricalMeasure(1, full.terminal_reward), EmpiricalMeasure(1, tail.terminal_reward));
    report.w2_threshold = 5.0 / std::sqrt(static_cast<double>(total));
    report.w2_ok = report.terminal_w2 < report.w2_threshold;
    return report;
}

std::string to_json(const RestartReport& report) {
    json doc;
    doc["switch_time"] = report.switch_time;
    doc["continued"] = estimate_json(report.continued);
    doc["restarted"] = estimate_json(report.restarted);
    doc["diff"] = report.diff;
    doc["se"] = report.se;
    doc["means_within_3se"] = report.means_agree;
    doc["terminal_w2"] = report.terminal_w2;
    doc["w2_threshold"] = report.w2_threshold;
    doc["w2_ok"] = report.w2_ok;
    doc["restart_seed"] = report.restart_seed;
    return doc.dump(2);
}

std::vector<ConcatenationEntry> check_concatenation(const ProblemSpec& spec, const std::vector<Policy>& outer,
                                                    const FamilySearch& continuation, double switch_time,
                                                    const TimeGrid& grid, const SimulationConfig& sim) {
    const std::size_t k0 = grid.index_of(switch_time);
    if (k0 == 0 || k0 >= grid.steps()) {
        throw ConfigError("concatenation: switch time must be an interior grid node");
    }
    const double at = grid.time(k0);
    const double sign = spec.sign();
    std::vector<ConcatenationEntry> entries;
    for (const Policy& head : outer) {
        ConcatenationEntry e;
        e.outer_params = head.params;
        e.unspliced = estimate_J(spec, head, grid, sim);
        const SearchResult best = search_policies(
            continuation, [&](const Policy& c) { return estimate_J(spec, splice(head, c, at), grid, sim); },
            spec.objective);
        e.spliced = best.value;
        e.continuation_params = best.best.params;
        e.ok = sign * e.spliced.mean >= sign * e.unspliced.mean - 3.0 * e.unspliced.std_error;
        entries.push_back(std::move(e));
    }
    return entries;
}

std::string to_json(const std::vector<ConcatenationEntry>& entries) {
    json doc = json::array();
    for (const auto& e : entries) {
        doc.push_back({{"outer_params", e.outer_params},
                       {"unspliced", estimate_json(e.unspliced)},
                       {"spliced", estimate_json(e.spliced)},
                       {"continuation_params", e.continuation_params},
                       {"ok", e.ok}});
    }
    return doc.dump(2);
}

}  // namespace mkv
