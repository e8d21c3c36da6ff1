// mkvlab: batch front end. Reads an experiment config, writes reports and
// data CSVs plus a manifest into --out-dir.

#include "mkv/config.hpp"
#include "mkv/discrete_oracle.hpp"
#include "mkv/dpp.hpp"
#include "mkv/error.hpp"
#include "mkv/io.hpp"
#include "mkv/lq_oracle.hpp"
#include "mkv/problem.hpp"
#include "mkv/simulator.hpp"
#include "mkv/value.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace mkv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitValidation = 3;
constexpr int kExitThreshold = 4;

struct Options {
    std::string subcommand;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::size_t threads = 1;
    std::string out_dir = ".";
    std::string format = "json";
};

class Artifacts {
  public:
    explicit Artifacts(fs::path dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& content) {
        fs::create_directories(dir_);
        std::ofstream out(dir_ / name, std::ios::binary);
        out << content;
        if (!out) {
            throw std::runtime_error("cannot write " + (dir_ / name).string());
        }
        files_.push_back(name);
    }

    template <class Fn>
    void write_with(const std::string& name, Fn&& fn) {
        std::ostringstream os;
        fn(os);
        write(name, os.str());
    }

    [[nodiscard]] const std::vector<std::string>& files() const noexcept { return files_; }

  private:
    fs::path dir_;
    std::vector<std::string> files_;
};

void log_stage(const std::string& message) { std::cerr << "[mkvlab] " << message << '\n'; }

json estimate_json(const ValueEstimate& e) {
    return {{"mean", e.mean},          {"std_error", e.std_error}, {"scenarios", e.scenarios},
            {"particles", e.particles}, {"steps", e.steps},         {"seed", e.seed}};
}

/// Scalars of a JSON document as key,value rows with dotted paths.
void flatten(const json& j, const std::string& prefix, CsvWriter& csv) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) {
            flatten(v, prefix.empty() ? k : prefix + "." + k, csv);
        }
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) {
            flatten(j[i], prefix + "[" + std::to_string(i) + "]", csv);
        }
    } else if (j.is_number_float()) {
        csv.field(prefix).field(j.get<double>()).end_row();
    } else if (j.is_string()) {
        csv.field(prefix).field(j.get<std::string>()).end_row();
    } else {
        csv.field(prefix).field(j.dump()).end_row();
    }
}

void write_report(Artifacts& out, const Options& opt, const json& report) {
    if (opt.format == "csv") {
        out.write_with("report.csv", [&](std::ostream& os) {
            CsvWriter csv(os);
            csv.field("key").field("value").end_row();
            flatten(report, "", csv);
        });
    } else {
        out.write("report.json", report.dump(2) + "\n");
    }
}

std::pair<double, double> initial_mean_variance(const InitialLaw& law) {
    switch (law.kind) {
        case InitialLaw::Kind::gaussian: return {law.first[0], law.second[0] * law.second[0]};
        case InitialLaw::Kind::dirac: return {law.first[0], 0.0};
        case InitialLaw::Kind::uniform: {
            const double w = law.second[0] - law.first[0];
            return {0.5 * (law.first[0] + law.second[0]), w * w / 12.0};
        }
        case InitialLaw::Kind::atoms: {
            const double m = law.atoms->mean()[0];
            return {m, central_moment2(*law.atoms, 0)};
        }
    }
    return {0.0, 0.0};
}

// ---------------------------------------------------------------------------

int cmd_simulate(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    const ProblemSpec& spec = cfg.require_problem();
    if (!cfg.policy) {
        throw ConfigError("policy: required block is missing");
    }
    const TimeGrid grid = cfg.grid();
    json report;
    report["subcommand"] = "simulate";
    report["problem"] = spec.name;
    int code = kExitOk;
    ParticleEnsemble ens;
    if (cfg.picard) {
        log_stage("picard iteration");
        PicardResult res = picard_solve(spec, *cfg.policy, grid, cfg.sim, cfg.picard->tol, cfg.picard->max_iter);
        report["picard"] = {{"distances", res.report.distances},
                            {"iterations", res.report.iterations},
                            {"converged", res.report.converged}};
        if (!res.report.converged) {
            code = kExitThreshold;
        }
        ens = std::move(res.ensemble);
    } else {
        log_stage("simulate");
        ens = simulate(spec, *cfg.policy, grid, cfg.sim);
    }
    report["value"] = estimate_json(summarize(ens));
    std::vector<double> means;
    for (std::size_t k = 0; k <= grid.steps(); ++k) {
        double acc = 0.0;
        for (std::size_t g = 0; g < ens.total_particles(); ++g) {
            acc += ens.state(g, k)[0];
        }
        means.push_back(acc / static_cast<double>(ens.total_particles()));
    }
    report["pooled_mean_x0"] = means;
    log_stage("write ensemble");
    out.write_with("ensemble.csv", [&](std::ostream& os) { write_csv(ens, os); });
    out.write_with("ensemble.bin", [&](std::ostream& os) { write_binary(ens, os); });
    write_report(out, opt, report);
    return code;
}

int cmd_validate(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    const ProblemSpec& spec = cfg.require_problem();
    const ValidateOptions v = cfg.validate.value_or(ValidateOptions{});
    log_stage("non-anticipativity");
    const auto na = validate_nonanticipativity(spec, v.samples, cfg.seed);
    log_stage("lipschitz");
    const auto lip = estimate_lipschitz(spec, v.samples, cfg.seed);
    log_stage("growth");
    const auto growth = validate_growth(spec, v.samples, cfg.seed);
    json report;
    report["subcommand"] = "validate";
    report["problem"] = spec.name;
    report["nonanticipativity"] = {{"drift", na.drift},
                                   {"diffusion", na.diffusion},
                                   {"common_diffusion", na.common_diffusion},
                                   {"running", na.running},
                                   {"terminal", na.terminal},
                                   {"samples", na.samples}};
    report["lipschitz"] = {{"constant", lip.constant},
                           {"growth_ratio", lip.growth_ratio},
                           {"pairs_used", lip.pairs_used},
                           {"pairs_skipped", lip.pairs_skipped},
                           {"worst_sample", lip.worst_sample}};
    report["growth"] = {{"ratio", growth.ratio}, {"squared_ratio", growth.squared_ratio}, {"samples", growth.samples}};
    std::vector<std::string> violations;
    if (na.max_violation() > 1e-12) {
        violations.emplace_back("non-anticipativity");
    }
    if (v.max_lipschitz && lip.constant > *v.max_lipschitz) {
        violations.emplace_back("lipschitz");
    }
    if (v.max_growth && growth.ratio > *v.max_growth) {
        violations.emplace_back("growth");
    }
    report["violations"] = violations;
    write_report(out, opt, report);
    return violations.empty() ? kExitOk : kExitValidation;
}

int cmd_optimize(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    const ProblemSpec& spec = cfg.require_problem();
    if (!cfg.search) {
        throw ConfigError("search: required block is missing");
    }
    log_stage("search");
    const SearchResult res = optimize_value(spec, *cfg.search, cfg.grid(), cfg.sim);
    json report;
    report["subcommand"] = "optimize";
    report["problem"] = spec.name;
    report["value"] = estimate_json(res.value);
    report["policy"] = json::parse(policy_to_json(res.best));
    report["best_index"] = res.best_index;
    report["candidates"] = res.trace.size();
    report["best_effort"] = res.best_effort;
    int code = kExitOk;
    if (cfg.expect) {
        const OptimizeExpect& e = *cfg.expect;
        json checks = json::object();
        if (e.param_index) {
            if (*e.param_index >= res.best.params.size()) {
                throw ConfigError("expect.param_index: beyond the policy's parameters");
            }
            const double got = res.best.params[*e.param_index];
            const bool ok = std::abs(got - e.param_target) <= e.param_tolerance;
            checks["param"] = {{"value", got}, {"target", e.param_target}, {"ok", ok}};
            code = ok ? code : kExitThreshold;
        }
        if (e.value) {
            const bool ok = std::abs(res.value.mean - *e.value) <= 3.0 * res.value.std_error;
            checks["value"] = {{"target", *e.value}, {"ok", ok}};
            code = ok ? code : kExitThreshold;
        }
        report["checks"] = checks;
    }
    out.write_with("trace.csv", [&](std::ostream& os) { write_trace_csv(res.trace, os); });
    write_report(out, opt, report);
    return code;
}

int cmd_dpp(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    const ProblemSpec& spec = cfg.require_problem();
    if (!cfg.dpp) {
        throw ConfigError("dpp: required block is missing");
    }
    DppConfig dc;
    dc.lhs_search = cfg.dpp->lhs;
    dc.outer_search = cfg.dpp->outer;
    dc.inner_search = cfg.dpp->inner;
    dc.stopping = cfg.dpp->stopping;
    dc.grid = cfg.grid();
    dc.outer = cfg.sim;
    dc.inner_scenarios = cfg.dpp->inner_scenarios;
    dc.inner_particles = cfg.dpp->inner_particles;
    dc.retry = cfg.dpp->retry;
    log_stage("dpp check (" + dc.stopping.describe() + ")");
    const DppReport rep = check_dpp(spec, dc);
    log_stage("gap " + format_double(rep.gap) + " se " + format_double(rep.gap_se) + " -> " + rep.label);
    json report = json::parse(to_json(rep, dc));
    report["subcommand"] = "dpp-check";
    report["problem"] = spec.name;
    out.write_with("inner_values.csv", [&](std::ostream& os) { write_inner_csv(rep, os); });
    write_report(out, opt, report);
    return rep.within ? kExitOk : kExitThreshold;
}

int cmd_ordering(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    const ProblemSpec& spec = cfg.require_problem();
    if (!cfg.ordering) {
        throw ConfigError("ordering: required block is missing");
    }
    OrderingConfig oc;
    oc.b_strong = cfg.ordering->b_strong;
    oc.strong = cfg.ordering->strong;
    oc.weak = cfg.ordering->weak;
    oc.embed = cfg.ordering->embed;
    oc.grid = cfg.grid();
    oc.sim = cfg.sim;
    log_stage("ordering");
    const OrderingReport rep = check_ordering(spec, oc);
    json report = json::parse(to_json(rep, spec));
    report["subcommand"] = "ordering";
    report["problem"] = spec.name;
    out.write_with("ordering.csv", [&](std::ostream& os) { write_ordering_csv(rep, os); });
    write_report(out, opt, report);
    return rep.monotone && rep.collapse ? kExitOk : kExitThreshold;
}

int cmd_lq_verify(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    const ProblemSpec& spec = cfg.require_problem();
    if (!spec.lq) {
        throw ConfigError("problem.template: lq-verify needs the lqcn template");
    }
    const LqSpec& lq = *spec.lq;
    const LqOptions lo = cfg.lq.value_or(LqOptions{});
    const TimeGrid grid = cfg.grid();
    log_stage("riccati");
    const RiccatiSolution sol = solve_riccati(lq, grid, RiccatiBranch::feedback);
    const auto [m0, v0] = initial_mean_variance(spec.initial);
    json report;
    report["subcommand"] = "lq-verify";
    report["problem"] = spec.name;
    report["riccati"] = {{"P0", sol.p.front()},
                         {"Pi0", sol.pi.front()},
                         {"r0", sol.r.front()},
                         {"substeps", sol.substeps},
                         {"doubling_change", sol.doubling_change}};
    const double oracle = lq_value(sol, grid.start(), m0, v0);
    report["oracle_value"] = oracle;
    bool ok = true;
    if (lo.monte_carlo) {
        log_stage("monte carlo under the oracle feedback");
        const ValueEstimate est = estimate_J(spec, riccati_policy(sol, spec.controls.hi()[0]), grid, cfg.sim);
        const bool agree = std::abs(est.mean - oracle) <= 3.0 * est.std_error;
        report["monte_carlo"] = {{"value", estimate_json(est)}, {"within_3se", agree}};
        ok = ok && agree;
    }
    log_stage("hjb residuals");
    const auto samples = hjb_residual_sweep(lq, grid, lo.residual_points, lo.atoms, cfg.seed, lo.detector_shift);
    double max_b = 0.0, max_f = 0.0;
    double min_b_shift = INFINITY, min_f_shift = INFINITY;
    for (const auto& s : samples) {
        max_b = std::max(max_b, std::abs(s.b_strong));
        max_f = std::max(max_f, std::abs(s.feedback));
        min_b_shift = std::min(min_b_shift, std::abs(s.b_strong_shifted));
        min_f_shift = std::min(min_f_shift, std::abs(s.feedback_shifted));
    }
    const bool residual_ok = max_b < lo.residual_tolerance && max_f < lo.residual_tolerance;
    const bool detector_ok = min_b_shift > lo.detector_threshold && min_f_shift > lo.detector_threshold;
    report["hjb"] = {{"points", samples.size()},
                     {"atoms", lo.atoms},
                     {"max_abs_residual_b_strong", max_b},
                     {"max_abs_residual_feedback", max_f},
                     {"min_abs_shifted_b_strong", min_b_shift},
                     {"min_abs_shifted_feedback", min_f_shift},
                     {"residual_ok", residual_ok},
                     {"detector_ok", detector_ok}};
    ok = ok && residual_ok && detector_ok;
    if (!samples.empty()) {
        // Lions derivative check on the first sample's measure.
        const RandomStream stream({cfg.seed, StreamRole::validation, 0x4A9, 0});
        std::vector<double> pts(std::min<std::size_t>(lo.atoms, 16));
        for (std::size_t i = 0; i < pts.size(); ++i) {
            pts[i] = stream.normal(i);
        }
        const LionsCheck lc = check_lions_derivatives(sol, grid.start() + 0.5 * (grid.end() - grid.start()),
                                                      EmpiricalMeasure(1, pts));
        const bool lions_ok = lc.first_error < lo.residual_tolerance && lc.second_error < lo.residual_tolerance;
        report["lions"] = {{"first_error", lc.first_error}, {"second_error", lc.second_error}, {"ok", lions_ok}};
        ok = ok && lions_ok;
    }
    out.write_with("riccati.csv", [&](std::ostream& os) { write_riccati_csv(sol, os); });
    out.write_with("residuals.csv", [&](std::ostream& os) {
        CsvWriter csv(os);
        csv.field("t").field("mean").field("variance").field("b_strong").field("feedback");
        csv.field("b_strong_shifted").field("feedback_shifted").end_row();
        for (const auto& s : samples) {
            csv.field(s.t).field(s.mean).field(s.variance).field(s.b_strong).field(s.feedback);
            csv.field(s.b_strong_shifted).field(s.feedback_shifted).end_row();
        }
    });
    write_report(out, opt, report);
    return ok ? kExitOk : kExitThreshold;
}

int cmd_discrete(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    if (!cfg.discrete) {
        throw ConfigError("discrete: required block is missing");
    }
    const DiscreteOptions& d = *cfg.discrete;
    json certs = json::array();
    double max_defect = 0.0, max_excess = -INFINITY, max_norm = 0.0;
    bool monotone = true;
    std::ostringstream table;
    CsvWriter csv(table);
    csv.field("instance").field("class").field("split").field("value").field("lhs").field("rhs");
    csv.field("defect").field("concatenation_excess").field("max_normalization_error").end_row();
    for (std::size_t i = 0; i < d.instances.size(); ++i) {
        const DiscreteProblem& pb = d.instances[i];
        std::vector<double> class_values;
        for (const DiscreteClass cls : d.classes) {
            const DiscreteSolution sol = exact_value(pb, cls, d.guard);
            class_values.push_back(sol.value);
            std::vector<std::size_t> splits = d.splits;
            if (splits.empty()) {
                for (std::size_t k = 1; k <= pb.horizon; ++k) {
                    splits.push_back(k);
                }
            }
            for (const std::size_t k : splits) {
                const DppCertificate cert = verify_dpp_exact(pb, k, cls, d.guard);
                json c = json::parse(certificate_json(pb, cls, sol, cert));
                c["instance"] = i;
                certs.push_back(c);
                max_defect = std::max(max_defect, cert.defect);
                max_excess = std::max(max_excess, cert.concatenation_excess);
                max_norm = std::max({max_norm, cert.max_normalization_error, sol.max_normalization_error});
                csv.field(std::uint64_t{i}).field(to_string(cls)).field(std::uint64_t{k}).field(sol.value);
                csv.field(cert.lhs).field(cert.rhs).field(cert.defect).field(cert.concatenation_excess);
                csv.field(std::max(cert.max_normalization_error, sol.max_normalization_error)).end_row();
            }
        }
        if (d.classes.size() == 2 && d.classes[0] == DiscreteClass::b_strong &&
            d.classes[1] == DiscreteClass::feedback && class_values[0] > class_values[1]) {
            monotone = false;
        }
    }
    log_stage("max defect " + format_double(max_defect));
    json report;
    report["subcommand"] = "discrete-check";
    report["instances"] = d.instances.size();
    report["max_defect"] = max_defect;
    report["max_concatenation_excess"] = max_excess;
    report["max_normalization_error"] = max_norm;
    report["class_monotone"] = monotone;
    const bool ok = max_defect < 1e-12 && max_excess <= 1e-12 && max_norm <= 1e-12 && monotone;
    report["ok"] = ok;
    report["certificates"] = certs;
    out.write("certificates.csv", table.str());
    write_report(out, opt, report);
    return ok ? kExitOk : kExitThreshold;
}

int cmd_markov(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    const ProblemSpec& spec = cfg.require_problem();
    if (!cfg.markov) {
        throw ConfigError("markov: required block is missing");
    }
    if (!cfg.search) {
        throw ConfigError("search: required block is missing");
    }
    MarkovConfig mc;
    mc.search = *cfg.search;
    mc.grid = cfg.grid();
    mc.sim = cfg.sim;
    mc.summary_atoms = cfg.markov->atoms;
    mc.tolerance = cfg.markov->tolerance;
    mc.independent_seeds = cfg.markov->independent_seeds;
    log_stage("markov reduction");
    const MarkovReport rep = check_markov_reduction(spec, cfg.markov->phi, cfg.markov->first, cfg.markov->second, mc);
    json report = json::parse(to_json(rep));
    report["subcommand"] = "markov-check";
    report["problem"] = spec.name;
    report["phi"] = to_string(cfg.markov->phi.kind);
    write_report(out, opt, report);
    if (!rep.accepted) {
        log_stage("pushforward mismatch: W2 = " + format_double(rep.summary_w2));
        return kExitValidation;
    }
    return rep.agree ? kExitOk : kExitThreshold;
}

int dispatch(const ExperimentConfig& cfg, const Options& opt, Artifacts& out) {
    const std::string& s = opt.subcommand;
    if (s == "simulate") return cmd_simulate(cfg, opt, out);
    if (s == "validate") return cmd_validate(cfg, opt, out);
    if (s == "optimize") return cmd_optimize(cfg, opt, out);
    if (s == "dpp-check") return cmd_dpp(cfg, opt, out);
    if (s == "ordering") return cmd_ordering(cfg, opt, out);
    if (s == "lq-verify") return cmd_lq_verify(cfg, opt, out);
    if (s == "discrete-check") return cmd_discrete(cfg, opt, out);
    if (s == "markov-check") return cmd_markov(cfg, opt, out);
    throw ConfigError("unknown subcommand " + s);
}

int run(const Options& opt) {
    Artifacts out(opt.out_dir);
    std::string text;
    std::optional<std::uint64_t> seed = opt.seed;
    int code = kExitOk;
    std::string message;
    try {
        text = read_text_file(opt.config);
        ExperimentConfig cfg = parse_config(text, opt.seed);
        seed = cfg.seed;
        cfg.sim.threads = opt.threads;
        code = dispatch(cfg, opt, out);
    } catch (const ConfigError& e) {
        code = kExitConfig;
        message = e.what();
    } catch (const GuardError& e) {
        code = kExitConfig;
        message = e.what();
    } catch (const ValidationError& e) {
        code = kExitValidation;
        message = e.what();
    } catch (const SimulationError& e) {
        code = kExitValidation;
        message = e.what();
    } catch (const std::exception& e) {
        code = kExitError;
        message = e.what();
    }
    if (!message.empty()) {
        std::cerr << "mkvlab " << opt.subcommand << ": " << message << '\n';
    }
    json manifest;
    manifest["tool"] = "mkvlab";
    manifest["version"] = MKV_VERSION;
    manifest["schema"] = kConfigSchema;
    manifest["subcommand"] = opt.subcommand;
    manifest["config"] = fs::path(opt.config).filename().string();
    manifest["config_hash"] = "fnv1a64:" + hex64(fnv1a(text));
    manifest["seed"] = seed ? json(*seed) : json(nullptr);
    manifest["format"] = opt.format;
    manifest["exit_code"] = code;
    if (!message.empty()) {
        manifest["error"] = message;
    }
    manifest["outputs"] = out.files();
    try {
        Artifacts(opt.out_dir).write("manifest.json", manifest.dump(2) + "\n");
    } catch (const std::exception& e) {
        std::cerr << "mkvlab: " << e.what() << '\n';
        return code == kExitOk ? kExitError : code;
    }
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mkvlab: McKean-Vlasov control with common noise, simulation and verification"};
    app.set_version_flag("--version", std::string(MKV_VERSION));
    app.require_subcommand(1);
    Options opt;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"simulate", "simulate the particle system and export the ensemble"},
        {"validate", "sample-based assumption validators"},
        {"optimize", "value search over a policy family"},
        {"dpp-check", "statistical dynamic programming check"},
        {"ordering", "b-strong / strong / weak value ordering"},
        {"lq-verify", "Riccati oracle against Monte Carlo, HJB residuals"},
        {"discrete-check", "exact dynamic programming certificate"},
        {"markov-check", "Markovian reduction under an updating function"},
    };
    std::uint64_t seed_value = 0;
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed_value, "override the config seed");
        sub->add_option("--threads", opt.threads, "worker threads (0 = hardware)")->capture_default_str();
        sub->add_option("--out-dir", opt.out_dir, "output directory")->capture_default_str();
        sub->add_option("--format", opt.format, "report format")
            ->check(CLI::IsMember({"json", "csv"}))
            ->capture_default_str();
        sub->callback([&opt, &seed_value, sub, name = name] {
            opt.subcommand = name;
            if (sub->count("--seed") > 0) {
                opt.seed = seed_value;
            }
        });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }
    return run(opt);
}
