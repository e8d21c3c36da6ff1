#include <catch_amalgamated.hpp>

#include "mkv/error.hpp"
#include "mkv/io.hpp"
#include "mkv/lq_oracle.hpp"
#include "mkv/value.hpp"
#include "support.hpp"

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

using namespace mkv;
using mkv::testing::scalar_spec;
using Catch::Matchers::WithinAbs;

namespace {

Policy feedback(double k1, double k2 = 0.0) {
    Policy p;
    p.info_class = InfoClass::feedback;
    p.family = PolicyFamily::linear_feedback;
    p.params = {0.0, k1, k2};
    p.clip = ControlBox({-10.0}, {10.0});
    return p;
}

Policy constant(double u) {
    Policy p;
    p.info_class = InfoClass::b_strong;
    p.family = PolicyFamily::constant;
    p.params = {u};
    return p;
}

ProblemSpec lqcn1() { return make_lq_problem(LqSpec::lqcn1(), InitialLaw::gaussian({0.0}, {1.0}), 10.0, "LQCN-1"); }

// Static problem: reward -(u - 0.4)^2, dynamics ignored.
ProblemSpec static_quadratic() {
    auto spec = scalar_spec();
    spec.coefficients.running = [](const CoefficientArgs& a) { return -(a.control[0] - 0.4) * (a.control[0] - 0.4); };
    return spec;
}

}  // namespace

TEST_CASE("estimate_J examples", "[value]") {
    auto spec = scalar_spec(1.0, 0.5);
    spec.coefficients.terminal = constant_reward(1.0);
    const auto one = estimate_J(spec, constant(0.0), TimeGrid(0.0, 1.0, 10), {5, 10, 1, 1});
    CHECK(one.mean == 1.0);
    CHECK(one.std_error == 0.0);

    auto running = scalar_spec(1.0, 0.5);
    running.horizon = 2.5;
    running.coefficients.running = constant_reward(1.0);
    const auto t = estimate_J(running, constant(0.0), TimeGrid(0.0, 2.5, 100), {3, 4, 1, 1});
    CHECK_THAT(t.mean, WithinAbs(2.5, 1e-12));
    CHECK(t.scenarios == 3);
    CHECK(t.particles == 4);
    CHECK(t.steps == 100);
}

TEST_CASE("LQCN-1 under u = -x costs 1.5", "[value][statistical]") {
    const auto v = estimate_J(lqcn1(), feedback(-1.0), TimeGrid(0.0, 1.0, 100), {200, 500, 20240601, 1});
    CHECK(std::abs(v.mean - 1.5) <= 3.0 * v.std_error);
    CHECK(v.std_error > 0.0);
}

TEST_CASE("standard errors are taken across scenarios", "[value]") {
    const auto est = estimate_from_scenarios({1.0, 2.0, 3.0, 4.0}, 10, 5, 7);
    CHECK(est.mean == 2.5);
    // sample sd of {1,2,3,4} is sqrt(5/3); se = sd / 2
    CHECK_THAT(est.std_error, WithinAbs(std::sqrt(5.0 / 3.0) / 2.0, 1e-15));
    const auto e = simulate(lqcn1(), feedback(-1.0), TimeGrid(0.0, 1.0, 10), {6, 8, 3, 1});
    const auto s = summarize(e);
    REQUIRE(s.scenario_means.size() == 6);
    double manual = 0.0;
    for (std::size_t g = 0; g < 8; ++g) manual += e.total_reward[g];
    CHECK_THAT(s.scenario_means[0], WithinAbs(manual / 8.0, 1e-14));
}

TEST_CASE("optimize recovers a static optimum within one refined cell", "[value]") {
    FamilySearch search;
    search.base = constant(0.0);
    search.ranges = {{0, -1.0, 1.0, 5}};
    search.refinements = 3;
    const auto r = optimize_value(static_quadratic(), search, TimeGrid(0.0, 1.0, 4), {1, 1, 1, 1});
    const double final_cell = 0.5 / 8.0;
    CHECK(std::abs(r.best.params[0] - 0.4) <= final_cell);
    CHECK(r.trace.front().stage == "grid");
    CHECK(r.trace.back().stage == "refine");
}

TEST_CASE("ties go to the lowest candidate index", "[value]") {
    // reward -u^2 is symmetric, so u = -0.5 and u = 0.5 tie exactly
    auto spec = scalar_spec();
    spec.coefficients.running = [](const CoefficientArgs& a) { return -a.control[0] * a.control[0]; };
    FamilySearch search;
    search.base = constant(0.0);
    search.ranges = {{0, -0.5, 0.5, 2}};
    search.refinements = 0;
    const auto r = optimize_value(spec, search, TimeGrid(0.0, 1.0, 4), {2, 2, 1, 1});
    REQUIRE(r.trace.size() == 2);
    CHECK(r.trace[0].estimate.mean == r.trace[1].estimate.mean);
    CHECK(r.best_index == 0);
    CHECK(r.best.params[0] == -0.5);
}

TEST_CASE("LQCN-1 gain search lands near the Riccati gain", "[value][statistical]") {
    FamilySearch search;
    search.base = feedback(-1.0);
    search.ranges = {{1, -2.0, 0.0, 21}};
    search.refinements = 3;
    const auto r = optimize_value(lqcn1(), search, TimeGrid(0.0, 1.0, 50), {100, 200, 20240603, 1});
    CHECK(std::abs(r.best.params[1] + 1.0) <= 0.05);
    CHECK(std::abs(r.value.mean - 1.5) <= 3.0 * r.value.std_error + 0.01);
}

TEST_CASE("the incumbent never beats the oracle by more than 3 se", "[value][statistical]") {
    FamilySearch search;
    search.base = feedback(-1.0);
    search.ranges = {{1, -2.0, 0.0, 9}, {2, -1.0, 1.0, 5}};
    search.refinements = 2;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto r = optimize_value(lqcn1(), search, TimeGrid(0.0, 1.0, 20), {60, 100, seed, 1});
        CHECK(r.value.mean >= 1.5 - 3.0 * r.value.std_error);
    }
}

TEST_CASE("enlarging the family never worsens the incumbent", "[value][property]") {
    const auto spec = lqcn1();
    const TimeGrid grid(0.0, 1.0, 10);
    const SimulationConfig cfg{20, 50, 5, 1};
    FamilySearch small;
    small.base = feedback(-1.0);
    small.ranges = {{1, -2.0, 0.0, 5}};
    small.refinements = 0;
    FamilySearch large = small;
    large.ranges = {{1, -2.0, 0.0, 9}};  // contains every point of the small grid
    FamilySearch larger = large;
    larger.extra = {feedback(-1.1, 0.2), feedback(-0.9, -0.1)};
    const auto a = optimize_value(spec, small, grid, cfg);
    const auto b = optimize_value(spec, large, grid, cfg);
    const auto c = optimize_value(spec, larger, grid, cfg);
    CHECK(b.value.mean <= a.value.mean);  // minimization
    CHECK(c.value.mean <= b.value.mean);
}

TEST_CASE("search budget exhaustion flags the result", "[value]") {
    FamilySearch search;
    search.base = constant(0.0);
    search.ranges = {{0, -1.0, 1.0, 9}};
    search.max_evaluations = 3;
    std::size_t calls = 0;
    const auto r = search_policies(
        search,
        [&](const Policy& p) {
            ++calls;
            return estimate_from_scenarios({p.params[0]}, 1, 1, 0);
        },
        Objective::maximize);
    CHECK(r.best_effort);
    CHECK(calls == 3);
    CHECK(r.trace.size() == 3);
}

TEST_CASE("duplicate candidates are evaluated once", "[value]") {
    FamilySearch search;
    search.base = constant(0.0);
    search.ranges = {{0, -1.0, 1.0, 3}};
    search.extra = {constant(0.0), constant(0.25)};
    search.refinements = 0;
    std::size_t calls = 0;
    const auto r = search_policies(
        search,
        [&](const Policy& p) {
            ++calls;
            return estimate_from_scenarios({-std::abs(p.params[0] - 0.3)}, 1, 1, 0);
        },
        Objective::maximize);
    CHECK(calls == 4);
    CHECK(r.best.params[0] == 0.25);
    CHECK(r.trace.back().stage == "extra");
}

TEST_CASE("value_at_measure at the horizon is the mean terminal reward", "[value]") {
    auto spec = scalar_spec(1.0);
    spec.coefficients.terminal = [](const CoefficientArgs& a) { return a.path.now()[0] * a.path.now()[0]; };
    FamilySearch search;
    search.base = constant(0.0);
    const auto mu = EmpiricalMeasure::from_points({{1.0}, {2.0}, {3.0}});
    const auto r = value_at_measure(spec, spec.horizon, mu, search, 10, {4, 4, 1, 1});
    CHECK_THAT(r.value.mean, WithinAbs(14.0 / 3.0, 1e-14));
    CHECK(r.value.std_error == 0.0);
}

TEST_CASE("value_at_measure with frozen dynamics is a static choice", "[value]") {
    auto spec = static_quadratic();
    spec.initial = InitialLaw::dirac({0.0});
    FamilySearch search;
    search.base = constant(0.0);
    search.ranges = {{0, -1.0, 1.0, 5}};
    const auto r = value_at_measure(spec, 0.5, EmpiricalMeasure::from_points({{2.0}}), search, 8, {3, 3, 1, 1});
    CHECK(std::abs(r.best.params[0] - 0.4) <= 0.5 / 8.0);
    CHECK(r.value.std_error == 0.0);
    const double d = r.best.params[0] - 0.4;
    CHECK_THAT(r.value.mean, WithinAbs(-d * d * 0.5, 1e-12));
}

TEST_CASE("LQCN-1 restarted at t = 0.5 matches the Riccati value", "[value][statistical]") {
    const auto spec = lqcn1();
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    std::vector<double> atoms(400);
    for (auto& a : atoms) a = normal(rng);
    const EmpiricalMeasure mu(1, atoms);
    const auto sol = solve_riccati(LqSpec::lqcn1(), TimeGrid(0.0, 1.0, 100));
    // P = 1, r(0.5) = 0.25: value v + 0.25 at the atoms' own mean and variance
    const double oracle = lq_value(sol, 0.5, mu.mean()[0], central_moment2(mu, 0));
    CHECK_THAT(lq_value(sol, 0.5, 0.0, 0.5), WithinAbs(0.75, 1e-9));
    FamilySearch search;
    search.base = feedback(-1.0);
    const auto r = value_at_measure(spec, 0.5, mu, search, 50, {100, 400, 4, 1});
    CHECK(std::abs(r.value.mean - oracle) <= 3.0 * r.value.std_error);
    CHECK(r.value.steps == 50);
}

TEST_CASE("halving the step shrinks the discretization error by about half", "[value]") {
    // LQCN-1 coefficients with the noise switched off, so estimate_J is exact
    // arithmetic and only the time-discretization error remains.
    LqSpec lq = LqSpec::lqcn1();
    lq.sigma = 0.0;
    lq.sigma0 = 0.0;
    const auto spec = make_lq_problem(lq, InitialLaw::dirac({1.0}));
    std::vector<double> j;
    for (std::size_t steps : {25u, 50u, 100u, 200u}) {
        const auto v = estimate_J(spec, feedback(-1.0), TimeGrid(0.0, 1.0, steps), {1, 4, 1, 1});
        CHECK(v.std_error == 0.0);
        j.push_back(v.mean);
    }
    for (std::size_t i = 0; i + 2 < j.size(); ++i) {
        const double ratio = (j[i + 2] - j[i + 1]) / (j[i + 1] - j[i]);
        CHECK(ratio >= 0.3);
        CHECK(ratio <= 0.7);
    }
    CHECK(std::abs(j.back() - 1.0) < 0.01);  // P(0) x0^2 with P = 1
}

TEST_CASE("trace csv lists every candidate", "[value][io]") {
    FamilySearch search;
    search.base = constant(0.0);
    search.ranges = {{0, -1.0, 1.0, 3}};
    search.refinements = 1;
    const auto r = optimize_value(static_quadratic(), search, TimeGrid(0.0, 1.0, 2), {1, 1, 1, 1});
    std::ostringstream out;
    write_trace_csv(r.trace, out);
    const auto rows = parse_csv(out.str());
    REQUIRE(rows.size() == r.trace.size() + 1);
    CHECK(rows[0] == std::vector<std::string>{"candidate", "stage", "p0", "mean", "std_error"});
    CHECK(rows[1][1] == "grid");
}

TEST_CASE("with_params writes the searched coordinates", "[value]") {
    const auto p = with_params(feedback(-1.0, 0.0), {{1, -2.0, 0.0, 3}, {2, 0.0, 1.0, 3}}, {-0.5, 0.75});
    CHECK(p.params == std::vector<double>{0.0, -0.5, 0.75});
}
