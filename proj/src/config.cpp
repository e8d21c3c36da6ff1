#include "mkv/config.hpp"

#include "mkv/error.hpp"
#include "mkv/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mkv {

using json = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kInstanceLabel = 0xD15C;

/// Cursor into the document that knows its dotted path for error messages.
class Node {
  public:
    Node(const json& value, std::string path) : j_(value), path_(std::move(path)) {}

    [[nodiscard]] const std::string& path() const noexcept { return path_; }
    [[nodiscard]] const json& raw() const noexcept { return j_; }

    void object(std::initializer_list<std::string_view> allowed) const {
        if (!j_.is_object()) {
            fail("expected an object");
        }
        for (const auto& [key, _] : j_.items()) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                throw ConfigError(child_path(key) + ": unknown key");
            }
        }
    }

    [[nodiscard]] bool has(std::string_view key) const { return j_.is_object() && j_.contains(key); }

    [[nodiscard]] Node at(std::string_view key) const {
        if (!has(key)) {
            throw ConfigError(child_path(key) + ": required field is missing");
        }
        return {j_.at(std::string(key)), child_path(key)};
    }

    template <class T>
    [[nodiscard]] T as() const {
        try {
            return j_.get<T>();
        } catch (const json::exception&) {
            fail("wrong type");
        }
    }

    template <class T>
    [[nodiscard]] T get(std::string_view key) const {
        return at(key).as<T>();
    }

    template <class T>
    [[nodiscard]] T get(std::string_view key, T fallback) const {
        return has(key) ? at(key).as<T>() : fallback;
    }

    [[nodiscard]] std::size_t count(std::string_view key, std::size_t fallback, std::size_t minimum = 1) const {
        if (!has(key)) {
            return fallback;
        }
        const Node n = at(key);
        if (!n.raw().is_number_integer() || n.raw().get<long long>() < static_cast<long long>(minimum)) {
            n.fail("must be an integer >= " + std::to_string(minimum));
        }
        return n.raw().get<std::size_t>();
    }

    [[nodiscard]] std::size_t required_count(std::string_view key, std::size_t minimum = 1) const {
        (void)at(key);
        return count(key, 0, minimum);
    }

    [[noreturn]] void fail(const std::string& message) const { throw ConfigError(path_ + ": " + message); }

  private:
    [[nodiscard]] std::string child_path(std::string_view key) const {
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    const json& j_;
    std::string path_;
};

std::vector<double> vector_or(const Node& node, std::string_view key, std::size_t size, double fill = 0.0) {
    if (!node.has(key)) {
        return std::vector<double>(size, fill);
    }
    auto v = node.get<std::vector<double>>(key);
    if (v.size() != size) {
        node.at(key).fail("expected " + std::to_string(size) + " entries, got " + std::to_string(v.size()));
    }
    return v;
}

InitialLaw parse_initial(const Node& node, std::size_t n) {
    node.object({"kind", "mean", "std", "point", "lo", "hi", "history"});
    const auto kind = node.get<std::string>("kind");
    InitialLaw law;
    if (kind == "gaussian") {
        law = InitialLaw::gaussian(vector_or(node, "mean", n), vector_or(node, "std", n, 1.0));
        for (double s : law.second) {
            if (s < 0.0) {
                node.at("std").fail("standard deviations must be nonnegative");
            }
        }
    } else if (kind == "dirac") {
        law = InitialLaw::dirac(vector_or(node, "point", n));
    } else if (kind == "uniform") {
        law = InitialLaw::uniform(vector_or(node, "lo", n), vector_or(node, "hi", n, 1.0));
        for (std::size_t i = 0; i < n; ++i) {
            if (!(law.first[i] <= law.second[i])) {
                node.at("hi").fail("need lo <= hi");
            }
        }
    } else {
        node.at("kind").fail("expected gaussian, dirac or uniform");
    }
    if (node.has("history")) {
        law.history = node.get<std::vector<std::vector<double>>>("history");
        for (const auto& h : law.history) {
            if (h.size() != n) {
                node.at("history").fail("every history point needs " + std::to_string(n) + " entries");
            }
        }
    }
    return law;
}

Objective parse_objective(const Node& node) {
    const auto s = node.as<std::string>();
    if (s == "maximize") {
        return Objective::maximize;
    }
    if (s == "minimize") {
        return Objective::minimize;
    }
    node.fail("expected maximize or minimize");
}

LqSpec parse_lq(const Node& node) {
    node.object({"a", "a_bar", "b", "q", "q_bar", "r", "g", "g_bar", "sigma", "sigma0", "horizon"});
    LqSpec lq;
    lq.a = node.get("a", lq.a);
    lq.a_bar = node.get("a_bar", lq.a_bar);
    lq.b = node.get("b", lq.b);
    lq.q = node.get("q", lq.q);
    lq.q_bar = node.get("q_bar", lq.q_bar);
    lq.r = node.get("r", lq.r);
    lq.g = node.get("g", lq.g);
    lq.g_bar = node.get("g_bar", lq.g_bar);
    lq.sigma = node.get("sigma", lq.sigma);
    lq.sigma0 = node.get("sigma0", lq.sigma0);
    lq.horizon = node.get("horizon", lq.horizon);
    try {
        lq.validate();
    } catch (const ConfigError& e) {
        node.fail(e.what());
    }
    return lq;
}

ScalarCoefficient parse_quadratic_reward(const Node& node, std::size_t m, bool terminal) {
    if (node.raw().is_number()) {
        return constant_reward(node.as<double>());
    }
    if (terminal) {
        node.object({"q", "q_bar", "offset"});
    } else {
        node.object({"q", "q_bar", "r", "u_ref", "offset"});
    }
    return quadratic_reward(node.get("q", 0.0), node.get("q_bar", 0.0), terminal ? 0.0 : node.get("r", 0.0),
                            terminal ? std::vector<double>{} : vector_or(node, "u_ref", m),
                            node.get("offset", 0.0));
}

ProblemSpec parse_problem(const Node& node) {
    node.object({"name", "template", "preset", "lq", "params", "dims", "t_start", "horizon", "controls",
                 "control_bound", "initial", "objective", "summary", "p_integrability"});
    const auto tmpl = node.get<std::string>("template");
    ProblemSpec spec;
    if (tmpl == "lqcn") {
        LqSpec lq;
        if (node.has("preset")) {
            const auto preset = node.get<std::string>("preset");
            if (preset == "LQCN-1") {
                lq = LqSpec::lqcn1();
            } else if (preset == "LQCN-2") {
                lq = LqSpec::lqcn2();
            } else {
                node.at("preset").fail("expected LQCN-1 or LQCN-2");
            }
            if (node.has("lq")) {
                node.at("lq").fail("give either a preset or explicit coefficients");
            }
        } else {
            lq = parse_lq(node.at("lq"));
        }
        for (const char* key : {"params", "dims", "horizon", "controls", "objective", "t_start"}) {
            if (node.has(key)) {
                node.at(key).fail("not used by the lqcn template");
            }
        }
        const double bound = node.get("control_bound", 10.0);
        if (!(bound > 0.0)) {
            node.at("control_bound").fail("must be positive");
        }
        InitialLaw init = node.has("initial") ? parse_initial(node.at("initial"), 1)
                                              : InitialLaw::gaussian({0.0}, {1.0});
        spec = make_lq_problem(lq, std::move(init), bound, node.get<std::string>("name", "lqcn"));
    } else if (tmpl == "constant" || tmpl == "linear") {
        const Node dims = node.at("dims");
        dims.object({"state", "idio", "common", "control"});
        spec.dims.state = dims.count("state", 1);
        spec.dims.idio = dims.count("idio", 1, 0);
        spec.dims.common = dims.count("common", 0, 0);
        spec.dims.control = dims.count("control", 1);
        const std::size_t n = spec.dims.state;
        const std::size_t d = spec.dims.idio;
        const std::size_t l = spec.dims.common;
        const std::size_t m = spec.dims.control;
        spec.name = node.get<std::string>("name", tmpl);
        spec.t_start = node.get("t_start", 0.0);
        spec.horizon = node.get("horizon", 1.0);
        if (!(spec.horizon > spec.t_start)) {
            node.at("horizon").fail("must exceed t_start");
        }
        if (node.has("controls")) {
            const Node c = node.at("controls");
            c.object({"lo", "hi"});
            auto lo = vector_or(c, "lo", m, -1.0);
            auto hi = vector_or(c, "hi", m, 1.0);
            for (std::size_t i = 0; i < m; ++i) {
                if (!(lo[i] <= hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i])) {
                    c.fail("box needs finite lo <= hi");
                }
            }
            spec.controls = ControlBox(std::move(lo), std::move(hi));
        } else {
            spec.controls = ControlBox(std::vector<double>(m, -1.0), std::vector<double>(m, 1.0));
        }
        spec.objective = node.has("objective") ? parse_objective(node.at("objective")) : Objective::maximize;
        spec.initial = node.has("initial") ? parse_initial(node.at("initial"), n)
                                           : InitialLaw::dirac(std::vector<double>(n, 0.0));
        const json empty = json::object();
        const Node params = node.has("params") ? node.at("params") : Node(empty, "problem.params");
        if (tmpl == "constant") {
            params.object({"drift", "sigma", "sigma0", "running", "terminal"});
            spec.coefficients.drift = constant_coefficient(vector_or(params, "drift", n));
            spec.coefficients.running = constant_reward(params.get("running", 0.0));
            spec.coefficients.terminal = constant_reward(params.get("terminal", 0.0));
        } else {
            params.object({"a", "a_bar", "b", "offset", "sigma", "sigma0", "running", "terminal"});
            spec.coefficients.drift = linear_drift(n, m, vector_or(params, "a", n * n), vector_or(params, "a_bar", n * n),
                                                   vector_or(params, "b", n * m), vector_or(params, "offset", n));
            spec.coefficients.running =
                params.has("running") ? parse_quadratic_reward(params.at("running"), m, false) : constant_reward(0.0);
            spec.coefficients.terminal = params.has("terminal")
                                             ? parse_quadratic_reward(params.at("terminal"), m, true)
                                             : constant_reward(0.0);
        }
        spec.coefficients.diffusion = constant_coefficient(vector_or(params, "sigma", n * d));
        spec.coefficients.common_diffusion = constant_coefficient(vector_or(params, "sigma0", n * l));
        spec.p_integrability = node.get("p_integrability", 2.0);
    } else {
        node.at("template").fail("expected constant, linear or lqcn");
    }
    if (node.has("summary")) {
        try {
            spec.summary.kind = updating_kind_from_string(node.get<std::string>("summary"));
        } catch (const ConfigError& e) {
            node.at("summary").fail(e.what());
        }
    }
    try {
        spec.validate();
    } catch (const ConfigError& e) {
        node.fail(e.what());
    }
    return spec;
}

Policy parse_policy(const Node& node, const ProblemSpec* problem, const ControlBox& box) {
    node.object({"info_class", "family", "params", "bounds", "randomized", "segments", "time_lo", "time_hi"});
    Policy p;
    try {
        p.info_class = info_class_from_string(node.get<std::string>("info_class"));
    } catch (const ConfigError& e) {
        node.at("info_class").fail(e.what());
    }
    try {
        p.family = policy_family_from_string(node.get<std::string>("family"));
    } catch (const ConfigError& e) {
        node.at("family").fail(e.what());
    }
    p.params = node.get<std::vector<double>>("params");
    p.clip = box;
    if (node.has("bounds")) {
        const auto b = node.get<std::vector<std::vector<double>>>("bounds");
        std::vector<double> lo, hi;
        for (const auto& pair : b) {
            if (pair.size() != 2 || !(pair[0] <= pair[1])) {
                node.at("bounds").fail("each bound is a [lo, hi] pair with lo <= hi");
            }
            lo.push_back(pair[0]);
            hi.push_back(pair[1]);
        }
        if (lo.size() != box.dim()) {
            node.at("bounds").fail("needs one pair per control coordinate");
        }
        p.clip = ControlBox(std::move(lo), std::move(hi));
    }
    p.randomized = node.get("randomized", false);
    p.segments = node.count("segments", 1);
    p.time_lo = node.get("time_lo", problem != nullptr ? problem->t_start : 0.0);
    p.time_hi = node.get("time_hi", problem != nullptr ? problem->horizon : 1.0);
    if (!(p.time_hi > p.time_lo)) {
        node.fail("time_hi must exceed time_lo");
    }
    try {
        p.validate();
    } catch (const ConfigError& e) {
        node.fail(e.what());
    }
    return p;
}

FamilySearch parse_search(const Node& node, const ProblemSpec& problem) {
    node.object({"base", "ranges", "extra", "refinements", "max_evaluations"});
    FamilySearch s;
    s.base = parse_policy(node.at("base"), &problem, problem.controls);
    if (node.has("ranges")) {
        const Node ranges = node.at("ranges");
        if (!ranges.raw().is_array()) {
            ranges.fail("expected an array");
        }
        for (std::size_t i = 0; i < ranges.raw().size(); ++i) {
            const Node r(ranges.raw()[i], ranges.path() + "[" + std::to_string(i) + "]");
            r.object({"index", "lo", "hi", "resolution"});
            ParamRange pr;
            pr.index = r.required_count("index", 0);
            pr.lo = r.get<double>("lo");
            pr.hi = r.get<double>("hi");
            pr.resolution = r.count("resolution", 1);
            if (!(pr.lo <= pr.hi)) {
                r.fail("need lo <= hi");
            }
            if (pr.index >= s.base.params.size()) {
                r.at("index").fail("beyond the base policy's parameters");
            }
            s.ranges.push_back(pr);
        }
    }
    if (node.has("extra")) {
        const Node extra = node.at("extra");
        if (!extra.raw().is_array()) {
            extra.fail("expected an array");
        }
        for (std::size_t i = 0; i < extra.raw().size(); ++i) {
            s.extra.push_back(parse_policy(Node(extra.raw()[i], extra.path() + "[" + std::to_string(i) + "]"),
                                           &problem, problem.controls));
        }
    }
    s.refinements = node.count("refinements", 3, 0);
    s.max_evaluations = node.count("max_evaluations", 100000);
    return s;
}

StoppingRule parse_stopping(const Node& node) {
    node.object({"kind", "time", "functional", "threshold", "direction", "coordinate"});
    const auto kind = node.get<std::string>("kind");
    if (kind == "deterministic") {
        return StoppingRule::at(node.get<double>("time"));
    }
    if (kind != "hitting") {
        node.at("kind").fail("expected deterministic or hitting");
    }
    const auto functional = node.get<std::string>("functional", "mean");
    const auto direction = node.get<std::string>("direction", "up");
    if (functional != "mean" && functional != "second-moment") {
        node.at("functional").fail("expected mean or second-moment");
    }
    if (direction != "up" && direction != "down") {
        node.at("direction").fail("expected up or down");
    }
    return StoppingRule::hitting(
        functional == "mean" ? StoppingRule::Functional::mean : StoppingRule::Functional::second_moment,
        node.get<double>("threshold"), direction == "up" ? StoppingRule::Direction::up : StoppingRule::Direction::down,
        node.count("coordinate", 0, 0));
}

DiscreteOptions parse_discrete(const Node& node, std::uint64_t seed) {
    node.object({"instances", "random", "splits", "classes", "guard"});
    DiscreteOptions opt;
    if (node.has("instances")) {
        const Node list = node.at("instances");
        if (!list.raw().is_array()) {
            list.fail("expected an array");
        }
        for (std::size_t i = 0; i < list.raw().size(); ++i) {
            try {
                opt.instances.push_back(discrete_problem_from_json(list.raw()[i].dump()));
            } catch (const ConfigError& e) {
                throw ConfigError(list.path() + "[" + std::to_string(i) + "]: " + e.what());
            }
        }
    }
    if (node.has("random")) {
        const Node r = node.at("random");
        r.object({"count", "states", "actions", "outcomes", "horizon"});
        const std::size_t count = r.count("count", 1);
        for (std::size_t i = 0; i < count; ++i) {
            opt.instances.push_back(random_discrete_problem(derive_seed(seed, kInstanceLabel, i), r.count("states", 2),
                                                            r.count("actions", 2), r.count("outcomes", 2),
                                                            r.count("horizon", 2)));
        }
    }
    if (opt.instances.empty()) {
        node.fail("needs 'instances' or 'random'");
    }
    if (node.has("splits")) {
        opt.splits = node.get<std::vector<std::size_t>>("splits");
        for (std::size_t k : opt.splits) {
            for (const auto& inst : opt.instances) {
                if (k == 0 || k > inst.horizon) {
                    node.at("splits").fail("every split must lie in 1..horizon");
                }
            }
        }
    }
    if (node.has("classes")) {
        opt.classes.clear();
        for (const auto& c : node.get<std::vector<std::string>>("classes")) {
            if (c == "b-strong") {
                opt.classes.push_back(DiscreteClass::b_strong);
            } else if (c == "feedback") {
                opt.classes.push_back(DiscreteClass::feedback);
            } else {
                node.at("classes").fail("expected b-strong or feedback");
            }
        }
    }
    opt.guard = node.count("guard", opt.guard);
    return opt;
}

}  // namespace

TimeGrid ExperimentConfig::grid() const {
    const ProblemSpec& p = require_problem();
    if (steps == 0) {
        throw ConfigError("grid.steps: required field is missing");
    }
    return TimeGrid(p.t_start, p.horizon, steps);
}

const ProblemSpec& ExperimentConfig::require_problem() const {
    if (!problem) {
        throw ConfigError("problem: required block is missing");
    }
    return *problem;
}

ExperimentConfig parse_config(std::string_view text, std::optional<std::uint64_t> seed_override) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    const Node root(doc, "");
    root.object({"schema", "description", "seed", "problem", "grid", "simulation", "policy", "search", "picard",
                 "validate", "expect", "dpp", "ordering", "markov", "lq", "discrete"});
    const auto schema = root.get<std::string>("schema");
    if (schema != kConfigSchema) {
        root.at("schema").fail("unsupported schema '" + schema + "', expected " + std::string(kConfigSchema));
    }
    ExperimentConfig cfg;
    cfg.seed = seed_override ? *seed_override : root.get<std::uint64_t>("seed", 0);
    if (root.has("problem")) {
        cfg.problem = parse_problem(root.at("problem"));
    }
    if (root.has("grid")) {
        const Node g = root.at("grid");
        g.object({"steps"});
        cfg.steps = g.required_count("steps", 1);
    }
    if (root.has("simulation")) {
        const Node s = root.at("simulation");
        s.object({"scenarios", "particles"});
        cfg.sim.scenarios = s.count("scenarios", 1);
        cfg.sim.particles = s.count("particles", 1);
    }
    cfg.sim.seed = cfg.seed;

    auto need_problem = [&](const char* block) -> const ProblemSpec& {
        if (!cfg.problem) {
            throw ConfigError(std::string(block) + ": needs a 'problem' block");
        }
        return *cfg.problem;
    };
    if (root.has("policy")) {
        const ProblemSpec& p = need_problem("policy");
        cfg.policy = parse_policy(root.at("policy"), &p, p.controls);
    }
    if (root.has("search")) {
        cfg.search = parse_search(root.at("search"), need_problem("search"));
    }
    if (root.has("picard")) {
        const Node n = root.at("picard");
        n.object({"tol", "max_iter"});
        PicardOptions o;
        o.tol = n.get("tol", o.tol);
        if (!(o.tol > 0.0)) {
            n.at("tol").fail("must be positive");
        }
        o.max_iter = n.count("max_iter", o.max_iter);
        cfg.picard = o;
    }
    if (root.has("validate")) {
        const Node n = root.at("validate");
        n.object({"samples", "max_lipschitz", "max_growth"});
        ValidateOptions o;
        o.samples = n.count("samples", o.samples);
        if (n.has("max_lipschitz")) {
            o.max_lipschitz = n.get<double>("max_lipschitz");
        }
        if (n.has("max_growth")) {
            o.max_growth = n.get<double>("max_growth");
        }
        cfg.validate = o;
    }
    if (root.has("expect")) {
        const Node n = root.at("expect");
        n.object({"param_index", "param", "param_tolerance", "value"});
        OptimizeExpect o;
        if (n.has("param_index")) {
            o.param_index = n.required_count("param_index", 0);
            o.param_target = n.get<double>("param");
        }
        o.param_tolerance = n.get("param_tolerance", o.param_tolerance);
        if (n.has("value")) {
            o.value = n.get<double>("value");
        }
        cfg.expect = o;
    }
    if (root.has("dpp")) {
        const Node n = root.at("dpp");
        const ProblemSpec& p = need_problem("dpp");
        n.object({"lhs", "outer", "inner", "stopping", "inner_scenarios", "inner_particles", "retry"});
        DppOptions o;
        o.lhs = parse_search(n.at("lhs"), p);
        o.outer = n.has("outer") ? parse_search(n.at("outer"), p) : o.lhs;
        o.inner = n.has("inner") ? parse_search(n.at("inner"), p) : o.lhs;
        o.stopping = parse_stopping(n.at("stopping"));
        o.inner_scenarios = n.count("inner_scenarios", o.inner_scenarios);
        o.inner_particles = n.count("inner_particles", o.inner_particles);
        o.retry = n.get("retry", o.retry);
        cfg.dpp = o;
    }
    if (root.has("ordering")) {
        const Node n = root.at("ordering");
        const ProblemSpec& p = need_problem("ordering");
        n.object({"b_strong", "strong", "weak", "embed"});
        OrderingOptions o;
        o.b_strong = parse_search(n.at("b_strong"), p);
        o.strong = parse_search(n.at("strong"), p);
        o.weak = parse_search(n.at("weak"), p);
        o.embed = n.get("embed", o.embed);
        cfg.ordering = o;
    }
    if (root.has("markov")) {
        const Node n = root.at("markov");
        const ProblemSpec& p = need_problem("markov");
        n.object({"phi", "first", "second", "atoms", "tolerance", "independent_seeds"});
        MarkovOptions o;
        try {
            o.phi.kind = updating_kind_from_string(n.get<std::string>("phi", "running-state"));
        } catch (const ConfigError& e) {
            n.at("phi").fail(e.what());
        }
        o.first = parse_initial(n.at("first"), p.dims.state);
        o.second = parse_initial(n.at("second"), p.dims.state);
        o.atoms = n.count("atoms", o.atoms);
        if (o.atoms > kExactTransportLimit) {
            n.at("atoms").fail("at most " + std::to_string(kExactTransportLimit));
        }
        o.tolerance = n.get("tolerance", o.tolerance);
        o.independent_seeds = n.get("independent_seeds", o.independent_seeds);
        cfg.markov = o;
    }
    if (root.has("lq")) {
        const Node n = root.at("lq");
        n.object({"residual_points", "atoms", "residual_tolerance", "detector_shift", "detector_threshold",
                  "monte_carlo"});
        LqOptions o;
        o.residual_points = n.count("residual_points", o.residual_points);
        o.atoms = n.count("atoms", o.atoms);
        o.residual_tolerance = n.get("residual_tolerance", o.residual_tolerance);
        o.detector_shift = n.get("detector_shift", o.detector_shift);
        o.detector_threshold = n.get("detector_threshold", o.detector_threshold);
        o.monte_carlo = n.get("monte_carlo", o.monte_carlo);
        cfg.lq = o;
    }
    if (root.has("discrete")) {
        cfg.discrete = parse_discrete(root.at("discrete"), cfg.seed);
    }
    return cfg;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot read " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string policy_to_json(const Policy& p) {
    json bounds = json::array();
    for (std::size_t i = 0; i < p.clip.dim(); ++i) {
        bounds.push_back({p.clip.lo()[i], p.clip.hi()[i]});
    }
    json out = {{"info_class", to_string(p.info_class)},
                {"family", to_string(p.family)},
                {"params", p.params},
                {"bounds", bounds}};
    if (p.randomized) {
        out["randomized"] = true;
    }
    if (p.segments != 1) {
        out["segments"] = p.segments;
        out["time_lo"] = p.time_lo;
        out["time_hi"] = p.time_hi;
    }
    return out.dump();
}

Policy policy_from_json(std::string_view text, const ControlBox& box) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("policy: ") + e.what());
    }
    return parse_policy(Node(doc, "policy"), nullptr, box);
}

}  // namespace mkv
