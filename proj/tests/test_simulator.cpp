#include <catch_amalgamated.hpp>

#include "mkv/error.hpp"
#include "mkv/io.hpp"
#include "mkv/simulator.hpp"
#include "mkv/value.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

using namespace mkv;
using mkv::testing::mean_of;
using mkv::testing::scalar_spec;
using mkv::testing::variance_of;
using Catch::Matchers::WithinAbs;

namespace {

Policy feedback(double k1, double k2 = 0.0, double bound = 10.0) {
    Policy p;
    p.info_class = InfoClass::feedback;
    p.family = PolicyFamily::linear_feedback;
    p.params = {0.0, k1, k2};
    p.clip = ControlBox({-bound}, {bound});
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

// Per-scenario averages of f(x) at node k, as i.i.d. samples across scenarios.
template <class F>
std::vector<double> scenario_averages(const ParticleEnsemble& e, std::size_t k, F f) {
    std::vector<double> out;
    for (std::size_t s = 0; s < e.scenarios; ++s) {
        double sum = 0.0;
        for (std::size_t p = 0; p < e.particles; ++p) sum += f(e.state(e.index(s, p), k)[0]);
        out.push_back(sum / static_cast<double>(e.particles));
    }
    return out;
}

}  // namespace

TEST_CASE("frozen dynamics keep states constant", "[simulator]") {
    auto spec = scalar_spec();
    spec.initial = InitialLaw::gaussian({1.0}, {2.0});
    const auto e = simulate(spec, constant(0.5), TimeGrid(0.0, 1.0, 8), {3, 5, 1, 1});
    for (std::size_t g = 0; g < e.total_particles(); ++g)
        for (std::size_t k = 0; k <= 8; ++k) CHECK(e.state(g, k)[0] == e.state(g, 0)[0]);
}

TEST_CASE("brownian marginal has variance T", "[simulator][statistical]") {
    const auto spec = scalar_spec(1.0);
    const double T = 1.0;
    const auto e = simulate(spec, constant(0.0), TimeGrid(0.0, T, 50), {20, 1000, 2, 1});
    std::vector<double> xt;
    for (std::size_t g = 0; g < e.total_particles(); ++g) xt.push_back(e.state(g, 50)[0]);
    const double n = static_cast<double>(xt.size());
    // sample variance of n normals: sd T sqrt(2 / (n - 1))
    CHECK(std::abs(variance_of(xt) - T) < 4.0 * T * std::sqrt(2.0 / (n - 1.0)));
}

TEST_CASE("LQCN-1 second moment follows the moment ODE", "[simulator][statistical]") {
    // dv/dt = -2v + sigma^2 + sigma0^2, v(0) = 1, so v(t) = 0.25 + 0.75 exp(-2t)
    const auto e = simulate(lqcn1(), feedback(-1.0), TimeGrid(0.0, 1.0, 100), {200, 500, 31, 1});
    for (std::size_t k : {25u, 50u, 75u, 100u}) {
        const double t = e.grid.time(k);
        const auto per = scenario_averages(e, k, [](double x) { return x * x; });
        const double se = std::sqrt(variance_of(per) / static_cast<double>(per.size()));
        CHECK(std::abs(mean_of(per) - (0.25 + 0.75 * std::exp(-2.0 * t))) < 3.0 * se);
    }
}

TEST_CASE("simulate is independent of the thread count", "[simulator][property]") {
    const auto spec = make_lq_problem(LqSpec::lqcn2(), InitialLaw::gaussian({0.0}, {1.0}));
    const TimeGrid grid(0.0, 1.0, 20);
    const auto a = simulate(spec, feedback(-1.0, -0.5), grid, {7, 30, 5, 1});
    const auto b = simulate(spec, feedback(-1.0, -0.5), grid, {7, 30, 5, 4});
    const auto c = simulate(spec, feedback(-1.0, -0.5), grid, {7, 30, 5, 1});
    CHECK(a.states == b.states);
    CHECK(a.controls == b.controls);
    CHECK(a.total_reward == b.total_reward);
    CHECK(a.states == c.states);
}

TEST_CASE("common noise is shared within a scenario only", "[simulator][property]") {
    const auto spec = lqcn1();
    const TimeGrid grid(0.0, 1.0, 10);
    const auto e = simulate(spec, feedback(-1.0), grid, {3, 4, 8, 1});
    for (std::size_t s = 0; s < 3; ++s) {
        const auto expected = brownian_increments(10, 1, grid.dt(), {8, StreamRole::common, std::uint32_t(s), 0});
        for (std::size_t k = 0; k < 10; ++k) CHECK(e.common(s, k)[0] == expected[k]);
    }
    CHECK(e.common(0, 3)[0] != e.common(1, 3)[0]);
    CHECK(e.idio(e.index(0, 0), 3)[0] != e.idio(e.index(0, 1), 3)[0]);
}

TEST_CASE("without common noise the output is invariant to the scenario split", "[simulator][property]") {
    LqSpec lq = LqSpec::lqcn2();
    lq.sigma0 = 0.0;
    const auto spec = make_lq_problem(lq, InitialLaw::gaussian({0.0}, {1.0}));
    REQUIRE(pooled_interaction(spec));
    const TimeGrid grid(0.0, 1.0, 20);
    const auto a = simulate(spec, feedback(-1.0, -0.5), grid, {4, 50, 9, 1});
    const auto b = simulate(spec, feedback(-1.0, -0.5), grid, {1, 200, 9, 1});
    const auto c = simulate(spec, feedback(-1.0, -0.5), grid, {200, 1, 9, 1});
    CHECK(a.states == b.states);
    CHECK(a.states == c.states);
    CHECK(a.total_reward == b.total_reward);
    CHECK(a.total_reward == c.total_reward);
    // pooling the per-scenario slices reproduces the unconditional empirical law
    std::vector<double> pooled_atoms;
    for (const auto& slice : conditional_slices(a, 20))
        pooled_atoms.insert(pooled_atoms.end(), slice.state.flat_points().begin(), slice.state.flat_points().end());
    const auto whole = conditional_slices(b, 20);
    REQUIRE(whole.size() == 1);
    CHECK(EmpiricalMeasure(1, pooled_atoms) == whole[0].state);
}

TEST_CASE("integrated control recovers the stored controls", "[simulator][property]") {
    const auto spec = lqcn1();
    const TimeGrid grid(0.0, 1.0, 16);
    const auto e = simulate(spec, feedback(-1.3, 0.4), grid, {2, 6, 4, 1});
    for (std::size_t g = 0; g < e.total_particles(); ++g) {
        CHECK(e.integrated(g, 0)[0] == 0.0);
        for (std::size_t k = 0; k < 16; ++k) {
            const double u = e.control(g, k)[0];
            const double quotient = (e.integrated(g, k + 1)[0] - e.integrated(g, k)[0]) / grid.dt();
            CHECK(std::abs(quotient - u) <= 1e-12 * std::max(1.0, std::abs(u)));
        }
    }
    // nonnegative controls give a nondecreasing A; the problem's U is enforced
    // even when the policy carries a wider box
    auto up = scalar_spec(1.0);
    up.controls = ControlBox({0.0}, {1.0});
    const auto f = simulate(up, feedback(1.0, 0.0, 1.0), grid, {2, 6, 4, 1});
    for (std::size_t g = 0; g < f.total_particles(); ++g)
        for (std::size_t k = 0; k < 16; ++k) CHECK(up.controls.contains(f.control(g, k)));
    for (std::size_t g = 0; g < f.total_particles(); ++g)
        for (std::size_t k = 0; k < 16; ++k) CHECK(f.integrated(g, k + 1)[0] >= f.integrated(g, k)[0]);
}

TEST_CASE("conditional slices use within-scenario particles only", "[simulator][property]") {
    const auto spec = lqcn1();
    auto e = simulate(spec, feedback(-1.0), TimeGrid(0.0, 1.0, 5), {3, 4, 6, 1});
    const std::size_t k = 3;
    const auto before = conditional_slices(e, k);
    REQUIRE(before.size() == 3);
    CHECK(before[1].state.size() == 4);

    auto sorted_atoms = [](const EmpiricalMeasure& m) {
        std::vector<double> v(m.flat_points().begin(), m.flat_points().end());
        std::sort(v.begin(), v.end());
        return v;
    };
    auto swap_states = [&](std::size_t g1, std::size_t g2) {
        const std::size_t n = e.dims.state, width = e.grid.points() * n;
        std::swap_ranges(e.states.begin() + g1 * width, e.states.begin() + (g1 + 1) * width,
                         e.states.begin() + g2 * width);
        std::swap_ranges(e.controls.begin() + g1 * e.steps(), e.controls.begin() + (g1 + 1) * e.steps(),
                         e.controls.begin() + g2 * e.steps());
    };
    swap_states(e.index(1, 0), e.index(1, 3));
    const auto within = conditional_slices(e, k);
    for (std::size_t s = 0; s < 3; ++s) CHECK(sorted_atoms(within[s].state) == sorted_atoms(before[s].state));

    swap_states(e.index(0, 1), e.index(2, 2));
    const auto across = conditional_slices(e, k);
    CHECK(sorted_atoms(across[0].state) != sorted_atoms(before[0].state));
    CHECK(sorted_atoms(across[2].state) != sorted_atoms(before[2].state));
    CHECK(sorted_atoms(across[1].state) == sorted_atoms(before[1].state));
    CHECK_THROWS(conditional_slices(e, 6));
}

TEST_CASE("joint slices project onto state slices", "[simulator][property]") {
    const auto e = simulate(lqcn1(), feedback(-1.0, 0.3), TimeGrid(0.0, 1.0, 6), {3, 7, 2, 1});
    for (std::size_t k = 0; k <= 6; ++k)
        for (const auto& slice : conditional_slices(e, k)) CHECK(slice.joint.leading(1) == slice.state);
}

TEST_CASE("single-particle scenarios give Dirac slices", "[simulator]") {
    const auto e = simulate(lqcn1(), feedback(-1.0), TimeGrid(0.0, 1.0, 4), {5, 1, 2, 1});
    for (const auto& slice : conditional_slices(e, 2)) CHECK(slice.state.size() == 1);
}

TEST_CASE("conditional means move with the common-noise increments", "[simulator]") {
    // b = 0, sigma = 0: X_s = X_0 + sigma0 (B_s - B_0) in each scenario
    const double sigma0 = 3.0;
    auto spec = scalar_spec(0.0, sigma0);
    const TimeGrid grid(0.0, 1.0, 10);
    const auto e = simulate(spec, constant(0.0), grid, {2, 5, 12, 1});
    double b0 = 0.0, b1 = 0.0;
    for (std::size_t k = 1; k <= 10; ++k) {
        b0 += e.common(0, k - 1)[0];
        b1 += e.common(1, k - 1)[0];
        const auto slices = conditional_slices(e, k);
        const double diff = slices[0].state.mean()[0] - slices[1].state.mean()[0];
        CHECK_THAT(diff, WithinAbs(sigma0 * (b0 - b1), 1e-12));
    }
}

TEST_CASE("non-finite states abort with their location", "[simulator]") {
    auto spec = scalar_spec(1.0);
    spec.coefficients.drift = [](const CoefficientArgs& a, std::span<double> out) {
        out[0] = a.t > 0.35 ? 1e308 * 1e10 : 0.0;
    };
    try {
        (void)simulate(spec, constant(0.0), TimeGrid(0.0, 1.0, 10), {2, 3, 1, 1});
        FAIL("expected SimulationError");
    } catch (const SimulationError& err) {
        CHECK(err.step() == 4);
        CHECK(err.scenario() == 0);
        CHECK(err.particle() == 0);
    }
}

TEST_CASE("second moments are stable under step halving", "[simulator][statistical]") {
    const auto spec = lqcn1();
    double previous = 0.0;
    std::vector<double> peaks;
    for (std::size_t steps : {25u, 50u, 100u}) {
        const auto e = simulate(spec, feedback(-1.0), TimeGrid(0.0, 1.0, steps), {50, 200, 3, 1});
        double peak = 0.0;
        for (std::size_t k = 0; k <= steps; ++k)
            peak = std::max(peak, mean_of(scenario_averages(e, k, [](double x) { return x * x; })));
        peaks.push_back(peak);
        previous = peak;
    }
    CHECK(std::isfinite(previous));
    CHECK(std::abs(peaks[2] / peaks[1] - 1.0) < 0.05);
    CHECK(std::abs(peaks[1] / peaks[0] - 1.0) < 0.05);
}

TEST_CASE("picard: measure-free coefficients converge in two iterations", "[simulator][picard]") {
    auto spec = scalar_spec(1.0, 0.5);
    spec.coefficients.drift = [](const CoefficientArgs& a, std::span<double> out) { out[0] = -a.path.now()[0]; };
    const auto r = picard_solve(spec, feedback(-0.5), TimeGrid(0.0, 1.0, 20), {4, 20, 3, 1}, 1e-10, 15);
    CHECK(r.report.converged);
    CHECK(r.report.iterations == 2);
    REQUIRE(r.report.distances.size() == 2);
    CHECK(r.report.distances[1] <= 1e-12);
}

TEST_CASE("picard: mean-field drift contracts towards the mean ODE", "[simulator][picard]") {
    // b = mean of the slice, X0 = 1, no common noise: m' = m, m(0) = 1
    auto spec = scalar_spec(1.0);
    spec.initial = InitialLaw::dirac({1.0});
    spec.coefficients.drift = [](const CoefficientArgs& a, std::span<double> out) {
        out[0] = a.flow.now().state_mean[0];
    };
    const std::size_t steps = 50;
    const TimeGrid grid(0.0, 1.0, steps);
    const auto r = picard_solve(spec, constant(0.0), grid, {1, 2000, 4, 1}, 1e-10, 15);
    CHECK(r.report.converged);
    const auto& d = r.report.distances;
    REQUIRE(d.size() >= 3);
    for (std::size_t i = 1; i + 1 < d.size(); ++i) CHECK(d[i] < d[i - 1]);
    // with C T = 1 the ratios stay below one
    for (std::size_t i = 1; i + 1 < d.size() && d[i] > 1e-14; ++i) CHECK(d[i + 1] / d[i] < 1.0);
    // Euler mean (1 + dt)^K, with the sampling error of the pooled mean
    const double expected = std::pow(1.0 + grid.dt(), static_cast<double>(steps));
    std::vector<double> xt;
    for (std::size_t g = 0; g < r.ensemble.total_particles(); ++g) xt.push_back(r.ensemble.state(g, steps)[0]);
    CHECK(std::abs(mean_of(xt) - expected) < 3.0 * std::sqrt(variance_of(xt) / xt.size()));
    CHECK(std::abs(expected - std::exp(1.0)) < 0.03);
}

TEST_CASE("picard and simulate agree on LQCN-1", "[simulator][picard]") {
    const auto spec = lqcn1();
    const TimeGrid grid(0.0, 1.0, 50);
    const SimulationConfig cfg{100, 200, 20240602, 1};
    const auto r = picard_solve(spec, feedback(-1.0), grid, cfg, 1e-4, 15);
    const auto direct = simulate(spec, feedback(-1.0), grid, cfg);
    CHECK(r.report.converged);
    CHECK(r.report.iterations <= 15);
    for (std::size_t i = 1; i < r.report.distances.size(); ++i)
        CHECK(r.report.distances[i] < r.report.distances[i - 1]);
    for (std::size_t k = 0; k <= 50; ++k) {
        const auto a = scenario_averages(r.ensemble, k, [](double x) { return x; });
        const auto b = scenario_averages(direct, k, [](double x) { return x; });
        const double se = std::sqrt((variance_of(a) + variance_of(b)) / a.size());
        CHECK(std::abs(mean_of(a) - mean_of(b)) <= 3.0 * se + 1e-12);
    }
}

TEST_CASE("picard reports non-convergence", "[simulator][picard]") {
    auto spec = scalar_spec(1.0);
    spec.initial = InitialLaw::dirac({1.0});
    spec.coefficients.drift = [](const CoefficientArgs& a, std::span<double> out) {
        out[0] = a.flow.now().state_mean[0];
    };
    const auto r = picard_solve(spec, constant(0.0), TimeGrid(0.0, 1.0, 20), {1, 100, 4, 1}, 1e-12, 2);
    CHECK_FALSE(r.report.converged);
    CHECK(r.report.iterations == 2);
}

TEST_CASE("binary snapshots round trip", "[simulator][io]") {
    const auto e = simulate(lqcn1(), feedback(-1.0), TimeGrid(0.0, 1.0, 5), {2, 3, 7, 1});
    std::stringstream buf;
    write_binary(e, buf);
    const std::string bytes = buf.str();
    CHECK(bytes.substr(0, 8) == "MKVENS01");
    const auto back = read_binary(buf);
    CHECK(back.states == e.states);
    CHECK(back.controls == e.controls);
    CHECK(back.integrated_control == e.integrated_control);
    CHECK(back.total_reward == e.total_reward);
    CHECK(back.seed == 7);
    CHECK(back.grid.steps() == 5);
}

TEST_CASE("ensemble csv has one row per particle and node", "[simulator][io]") {
    const auto e = simulate(lqcn1(), feedback(-1.0), TimeGrid(0.0, 1.0, 4), {2, 3, 7, 1});
    std::ostringstream out;
    write_csv(e, out);
    const auto rows = parse_csv(out.str());
    REQUIRE(rows.size() == 1 + 2 * 3 * 5);
    CHECK(rows[0] == std::vector<std::string>{"scenario", "particle", "time", "x0", "u0", "A0"});
    CHECK(rows.back()[4].empty());  // no control at the last node
}

TEST_CASE("parallel_for rethrows the lowest failing index", "[simulator]") {
    std::vector<int> hit(20, 0);
    parallel_for(20, 4, [&](std::size_t i) { hit[i] = 1; });
    CHECK(std::count(hit.begin(), hit.end(), 1) == 20);
    try {
        parallel_for(20, 4, [](std::size_t i) {
            if (i == 7 || i == 13) throw std::runtime_error(std::to_string(i));
        });
        FAIL("expected exception");
    } catch (const std::runtime_error& err) {
        CHECK(std::string(err.what()) == "7");
    }
}
