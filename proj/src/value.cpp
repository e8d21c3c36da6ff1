#include "mkv/value.hpp"

#include "mkv/error.hpp"
#include "mkv/io.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

namespace mkv {

ValueEstimate estimate_from_scenarios(std::vector<double> scenario_means, std::size_t particles, std::size_t steps,
                                      std::uint64_t seed) {
    if (scenario_means.empty()) {
        throw ConfigError("estimate: no scenarios");
    }
    ValueEstimate e;
    e.scenarios = scenario_means.size();
    e.particles = particles;
    e.steps = steps;
    e.seed = seed;
    double sum = 0.0;
    for (double v : scenario_means) {
        sum += v;
    }
    e.mean = sum / static_cast<double>(e.scenarios);
    if (e.scenarios > 1) {
        double ss = 0.0;
        for (double v : scenario_means) {
            ss += (v - e.mean) * (v - e.mean);
        }
        e.std_error = std::sqrt(ss / static_cast<double>(e.scenarios - 1) / static_cast<double>(e.scenarios));
    }
    e.scenario_means = std::move(scenario_means);
    return e;
}

ValueEstimate summarize(const ParticleEnsemble& ensemble) {
    const std::size_t m_scen = ensemble.scenarios;
    const std::size_t n_part = ensemble.particles;
    std::vector<double> means(m_scen, 0.0);
    for (std::size_t s = 0; s < m_scen; ++s) {
        double acc = 0.0;
        for (std::size_t p = 0; p < n_part; ++p) {
            acc += ensemble.total_reward[ensemble.index(s, p)];
        }
        means[s] = acc / static_cast<double>(n_part);
    }
    ValueEstimate e = estimate_from_scenarios(means, n_part, ensemble.steps(), ensemble.seed);
    if (m_scen == 1 && n_part > 1) {
        // Particles are the only replication available.
        double ss = 0.0;
        for (std::size_t p = 0; p < n_part; ++p) {
            const double dv = ensemble.total_reward[p] - e.mean;
            ss += dv * dv;
        }
        e.std_error = std::sqrt(ss / static_cast<double>(n_part - 1) / static_cast<double>(n_part));
    }
    return e;
}

ValueEstimate estimate_J(const ProblemSpec& spec, const Policy& policy, const TimeGrid& grid,
                         const SimulationConfig& config) {
    SimulationOptions options;
    options.store_paths = false;
    return summarize(simulate(spec, policy, grid, config, options));
}

Policy with_params(const Policy& base, const std::vector<ParamRange>& ranges, const std::vector<double>& values) {
    Policy p = base;
    for (std::size_t i = 0; i < ranges.size(); ++i) {
        if (ranges[i].index >= p.params.size()) {
            throw ConfigError("search: parameter index " + std::to_string(ranges[i].index) + " out of range");
        }
        p.params[ranges[i].index] = values[i];
    }
    return p;
}

SearchResult search_policies(const FamilySearch& search, const PolicyEvaluator& evaluate_policy,
                             Objective objective) {
    search.base.validate();
    for (const auto& r : search.ranges) {
        if (!(r.lo <= r.hi) || r.resolution == 0) {
            throw ConfigError("search: each range needs lo <= hi and resolution >= 1");
        }
    }
    const double sign = objective == Objective::maximize ? 1.0 : -1.0;
    SearchResult result;
    bool have_incumbent = false;
    std::map<std::vector<double>, std::size_t> seen;  // full parameter vector -> trace index

    // Returns false once the budget is spent.
    auto consider = [&](const Policy& candidate, const std::string& stage) {
        if (result.trace.size() >= search.max_evaluations) {
            result.best_effort = true;
            return false;
        }
        std::vector<double> key = candidate.params;
        key.push_back(static_cast<double>(static_cast<int>(candidate.info_class)));
        key.push_back(candidate.randomized ? 1.0 : 0.0);
        if (seen.count(key) != 0) {
            return true;
        }
        TraceEntry entry;
        entry.index = result.trace.size();
        entry.stage = stage;
        entry.params = candidate.params;
        entry.estimate = evaluate_policy(candidate);
        seen.emplace(std::move(key), entry.index);
        if (!have_incumbent || sign * entry.estimate.mean > sign * result.value.mean) {
            result.best = candidate;
            result.value = entry.estimate;
            result.best_index = entry.index;
            have_incumbent = true;
        }
        result.trace.push_back(std::move(entry));
        return true;
    };

    std::vector<std::pair<double, double>> bounds;
    std::vector<std::size_t> resolution;
    for (const auto& r : search.ranges) {
        bounds.emplace_back(r.lo, r.hi);
        resolution.push_back(r.resolution);
    }
    bool within_budget = true;
    if (search.ranges.empty()) {
        within_budget = consider(search.base, "grid");
    } else {
        for (const auto& point : family_grid(bounds, resolution)) {
            if (!(within_budget = consider(with_params(search.base, search.ranges, point), "grid"))) {
                break;
            }
        }
    }
    for (const auto& extra : search.extra) {
        if (!within_budget) {
            break;
        }
        extra.validate();
        within_budget = consider(extra, "extra");
    }

    std::vector<double> width;
    for (const auto& r : search.ranges) {
        width.push_back(r.resolution > 1 ? (r.hi - r.lo) / static_cast<double>(r.resolution - 1) : (r.hi - r.lo) / 2.0);
    }
    for (std::size_t round = 0; round < search.refinements && within_budget && !search.ranges.empty(); ++round) {
        for (auto& w : width) {
            w /= 2.0;
        }
        for (std::size_t i = 0; i < search.ranges.size() && within_budget; ++i) {
            const auto& r = search.ranges[i];
            if (width[i] == 0.0 || result.best.params.size() <= r.index) {
                continue;
            }
            for (const double dir : {-1.0, 1.0}) {
                Policy candidate = result.best;
                if (candidate.info_class != search.base.info_class || candidate.family != search.base.family ||
                    candidate.randomized != search.base.randomized) {
                    break;  // incumbent came from the extra list and has another layout
                }
                const double v = std::clamp(candidate.params[r.index] + dir * width[i], r.lo, r.hi);
                if (v == candidate.params[r.index]) {
                    continue;
                }
                candidate.params[r.index] = v;
                if (!(within_budget = consider(candidate, "refine"))) {
                    break;
                }
            }
        }
    }
    return result;
}

SearchResult optimize_value(const ProblemSpec& spec, const FamilySearch& search, const TimeGrid& grid,
                            const SimulationConfig& config) {
    return search_policies(
        search, [&](const Policy& p) { return estimate_J(spec, p, grid, config); }, spec.objective);
}

SearchResult value_at_measure(const ProblemSpec& spec, double t_start, const EmpiricalMeasure& initial,
                              const FamilySearch& search, std::size_t steps, const SimulationConfig& config) {
    if (initial.dim() != spec.dims.state) {
        throw ConfigError("value_at_measure: measure dimension differs from the state dimension");
    }
    if (t_start > spec.horizon + 1e-12 || t_start < spec.t_start - 1e-12) {
        throw ConfigError("value_at_measure: restart time outside the horizon");
    }
    if (std::abs(t_start - spec.horizon) <= 1e-12) {
        // No dynamics left: average g over the atoms against their own slice.
        const std::size_t n = spec.dims.state;
        const auto u0 = spec.controls.center();
        std::vector<double> pts;
        pts.reserve(initial.size() * (n + u0.size()));
        for (std::size_t i = 0; i < initial.size(); ++i) {
            const auto x = initial.point(i);
            pts.insert(pts.end(), x.begin(), x.end());
            pts.insert(pts.end(), u0.begin(), u0.end());
        }
        const EmpiricalMeasure joint(n + u0.size(), std::move(pts),
                                     std::vector<double>(initial.weights().begin(), initial.weights().end()));
        const SliceStats stats = slice_stats(joint, n);
        const FlowView flow{{&stats, 1}, 0, &joint};
        double value = 0.0;
        for (std::size_t i = 0; i < initial.size(); ++i) {
            const CoefficientArgs args{spec.horizon, PathView{initial.point(i), n, 0}, flow, {}};
            value += initial.weight(i) * spec.coefficients.terminal(args);
        }
        SearchResult result;
        result.best = search.base;
        result.value = estimate_from_scenarios({value}, initial.size(), 0, config.seed);
        return result;
    }
    if (steps == 0) {
        throw ConfigError("value_at_measure: need at least one step");
    }
    ProblemSpec restarted = spec;
    restarted.t_start = t_start;
    restarted.initial = InitialLaw::from_atoms(initial);
    const TimeGrid grid(t_start, spec.horizon, steps);
    return optimize_value(restarted, search, grid, config);
}

void write_trace_csv(const std::vector<TraceEntry>& trace, std::ostream& out) {
    std::size_t width = 0;
    for (const auto& e : trace) {
        width = std::max(width, e.params.size());
    }
    CsvWriter csv(out);
    csv.field("candidate").field("stage");
    for (std::size_t i = 0; i < width; ++i) {
        csv.field("p" + std::to_string(i));
    }
    csv.field("mean").field("std_error").end_row();
    for (const auto& e : trace) {
        csv.field(std::uint64_t{e.index}).field(e.stage);
        for (std::size_t i = 0; i < width; ++i) {
            if (i < e.params.size()) {
                csv.field(e.params[i]);
            } else {
                csv.empty();
            }
        }
        csv.field(e.estimate.mean).field(e.estimate.std_error).end_row();
    }
}

}  // namespace mkv
