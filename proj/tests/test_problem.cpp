#include <catch_amalgamated.hpp>

#include "mkv/error.hpp"
#include "mkv/measures.hpp"
#include "mkv/problem.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace mkv;
using mkv::testing::scalar_spec;
using Catch::Matchers::WithinAbs;

namespace {

ProblemSpec lqcn1() { return make_lq_problem(LqSpec::lqcn1(), InitialLaw::gaussian({0.0}, {1.0}), 10.0, "LQCN-1"); }
ProblemSpec lqcn2() { return make_lq_problem(LqSpec::lqcn2(), InitialLaw::gaussian({0.0}, {1.0}), 10.0, "LQCN-2"); }

const std::vector<UpdatingFunction::Kind> kAllKinds{
    UpdatingFunction::Kind::running_state, UpdatingFunction::Kind::running_max,
    UpdatingFunction::Kind::running_average, UpdatingFunction::Kind::composite};

}  // namespace

TEST_CASE("control box clipping and reference point", "[problems]") {
    const ControlBox box({-1.0, 0.0}, {1.0, 2.0});
    CHECK(box.center() == std::vector<double>{0.0, 1.0});
    std::vector<double> u{5.0, -3.0};
    box.clip(u);
    CHECK(u == std::vector<double>{1.0, 0.0});
    CHECK(box.contains(u));
    CHECK_THAT(box.distance_to_reference(u), WithinAbs(std::sqrt(2.0), 1e-15));
    CHECK_THROWS_AS(ControlBox({1.0}, {0.0}), ConfigError);
    CHECK_THROWS_AS(ControlBox({}, {}), ConfigError);
}

TEST_CASE("nonanticipativity: current state passes, terminal state is caught", "[problems]") {
    auto spec = scalar_spec(1.0);
    spec.coefficients.drift = [](const CoefficientArgs& a, std::span<double> out) { out[0] = a.path.now()[0]; };
    CHECK(validate_nonanticipativity(spec, 200, 1).max_violation() == 0.0);

    spec.coefficients.drift = [](const CoefficientArgs& a, std::span<double> out) {
        out[0] = a.path.at(a.path.size() - 1)[0];
    };
    const auto report = validate_nonanticipativity(spec, 200, 1);
    CHECK(report.drift > 0.0);
    CHECK(report.running == 0.0);

    // a reward peeking at a later slice mean is caught as well
    spec.coefficients.drift = constant_coefficient({0.0});
    spec.coefficients.running = [](const CoefficientArgs& a) {
        return a.flow.stats[a.flow.stats.size() - 1].state_mean[0];
    };
    CHECK(validate_nonanticipativity(spec, 200, 1).running > 0.0);
    CHECK_THROWS_AS(validate_nonanticipativity(spec, 0, 1), ConfigError);
}

TEST_CASE("shipped benchmark coefficients are nonanticipative", "[problems][property]") {
    CHECK(validate_nonanticipativity(lqcn1(), 500, 3).max_violation() == 0.0);
    CHECK(validate_nonanticipativity(lqcn2(), 500, 3).max_violation() == 0.0);
    auto linear = scalar_spec(0.3, 0.2);
    linear.coefficients.drift = linear_drift(1, 1, {-0.5}, {0.25}, {1.0}, {0.1});
    linear.coefficients.running = quadratic_reward(1.0, 0.5, 0.1, {0.0});
    linear.coefficients.terminal = quadratic_reward(2.0, 0.0, 0.0, {});
    CHECK(validate_nonanticipativity(linear, 500, 3).max_violation() == 0.0);
}

TEST_CASE("evaluator failures carry context", "[problems]") {
    auto spec = scalar_spec();
    spec.coefficients.running = [](const CoefficientArgs&) -> double { throw std::runtime_error("boom"); };
    CHECK_THROWS_AS(validate_nonanticipativity(spec, 3, 1), ValidationError);
}

TEST_CASE("lipschitz estimate examples", "[problems]") {
    auto constant = scalar_spec(0.7, 0.4);
    CHECK(estimate_lipschitz(constant, 300, 5).constant == 0.0);

    auto linear = scalar_spec();
    linear.coefficients.drift = [](const CoefficientArgs& a, std::span<double> out) { out[0] = 3.0 * a.path.now()[0]; };
    const auto lin = estimate_lipschitz(linear, 300, 5);
    CHECK(lin.constant <= 3.0 + 1e-12);
    CHECK(lin.constant > 2.5);
    CHECK(lin.pairs_used > 0);

    auto mean_drift = scalar_spec();
    mean_drift.coefficients.drift = [](const CoefficientArgs& a, std::span<double> out) {
        out[0] = a.flow.now().state_mean[0];
    };
    CHECK(estimate_lipschitz(mean_drift, 300, 5).constant <= 1.0 + 1e-12);

    auto bad_p = constant;
    bad_p.p_integrability = 1.0;
    CHECK_THROWS_AS(estimate_lipschitz(bad_p, 10, 5), ConfigError);
}

TEST_CASE("the mean is 1-Lipschitz in W2 on random 8-atom pairs", "[problems][property]") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> normal;
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> a(8), b(8);
        const double shift = 2.0 * normal(rng);
        for (auto& v : a) v = normal(rng);
        for (auto& v : b) v = shift + normal(rng);
        const EmpiricalMeasure mu(1, a), nu(1, b);
        CHECK(std::abs(mu.mean()[0] - nu.mean()[0]) <= wasserstein2_assignment(mu, nu) + 1e-12);
    }
}

TEST_CASE("lipschitz estimate never decreases as samples are added", "[problems][property]") {
    auto spec = lqcn2();
    double previous = 0.0;
    for (std::size_t count : {1, 4, 16, 64, 256}) {
        const double c = estimate_lipschitz(spec, count, 9).constant;
        CHECK(c >= previous);
        previous = c;
    }
}

TEST_CASE("growth validator examples", "[problems]") {
    auto zero = scalar_spec();
    CHECK(validate_growth(zero, 200, 2).ratio == 0.0);

    auto control_cost = scalar_spec();
    control_cost.coefficients.running = [](const CoefficientArgs& a) { return a.control[0] * a.control[0]; };
    CHECK(validate_growth(control_cost, 200, 2).ratio <= 1.0);

    // Q = R = G = 1 in one dimension: every quadratic term is one of the bound's terms
    const auto lq = validate_growth(lqcn1(), 500, 2);
    CHECK(std::isfinite(lq.ratio));
    CHECK(lq.ratio <= 1.0);
    CHECK(lq.ratio > 0.0);
}

TEST_CASE("updating function examples", "[problems]") {
    const std::vector<double> times{0.0, 0.5, 1.0};
    const std::vector<double> path{0.0, 2.0, 1.0};

    UpdatingFunction state{UpdatingFunction::Kind::running_state};
    CHECK(apply_updating(state, times, path, 1) == path);

    UpdatingFunction rmax{UpdatingFunction::Kind::running_max};
    const auto zmax = apply_updating(rmax, times, path, 1);
    const std::size_t dim = rmax.summary_dim(1);
    const std::size_t off = rmax.max_offset(1);
    std::vector<double> maxima;
    for (std::size_t k = 0; k < 3; ++k) maxima.push_back(zmax[k * dim + off]);
    CHECK(maxima == std::vector<double>{0.0, 2.0, 2.0});

    UpdatingFunction avg{UpdatingFunction::Kind::running_average};
    const std::vector<double> constant(3, 1.7);
    const auto zavg = apply_updating(avg, times, constant, 1);
    for (std::size_t k = 0; k < 3; ++k)
        CHECK_THAT(zavg[k * avg.summary_dim(1) + avg.average_offset(1)], WithinAbs(1.7, 1e-15));

    CHECK_THROWS_AS(apply_updating(state, {}, {}, 1), ConfigError);
    CHECK(updating_kind_from_string(to_string(UpdatingFunction::Kind::composite)) ==
          UpdatingFunction::Kind::composite);
}

TEST_CASE("running average uses the trapezoidal rule", "[problems]") {
    // x(t) = t on [0, 1]: the trapezoid is exact, average at t is t / 2
    const std::size_t k = 10;
    std::vector<double> times(k + 1), path(k + 1);
    for (std::size_t i = 0; i <= k; ++i) times[i] = path[i] = static_cast<double>(i) / k;
    UpdatingFunction avg{UpdatingFunction::Kind::running_average};
    const auto z = apply_updating(avg, times, path, 1);
    for (std::size_t i = 1; i <= k; ++i)
        CHECK_THAT(z[i * avg.summary_dim(1) + avg.average_offset(1)], WithinAbs(times[i] / 2.0, 1e-14));
}

TEST_CASE("updating functions are nonanticipative", "[problems][property]") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> normal;
    const std::size_t k = 20, n = 2;
    std::vector<double> times(k + 1);
    for (std::size_t i = 0; i <= k; ++i) times[i] = 0.05 * static_cast<double>(i);
    for (auto kind : kAllKinds) {
        const UpdatingFunction phi{kind};
        const std::size_t dim = phi.summary_dim(n);
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> path((k + 1) * n);
            for (auto& v : path) v = normal(rng);
            const std::size_t cut = 1 + rep % (k - 1);
            auto perturbed = path;
            for (std::size_t i = (cut + 1) * n; i < perturbed.size(); ++i) perturbed[i] += 1.0 + normal(rng);
            const auto a = apply_updating(phi, times, path, n);
            const auto b = apply_updating(phi, times, perturbed, n);
            CHECK(std::equal(a.begin(), a.begin() + static_cast<std::ptrdiff_t>((cut + 1) * dim), b.begin()));
        }
    }
}

TEST_CASE("updating functions are increment consistent", "[problems][property]") {
    // Reversing the interior nodes before s keeps x(0), x(s), the running max
    // and the trapezoid sum, so both paths share the summary at s; after s they
    // share every increment.
    std::mt19937_64 rng(13);
    std::normal_distribution<double> normal;
    const std::size_t k = 24, n = 1;
    std::vector<double> times(k + 1);
    for (std::size_t i = 0; i <= k; ++i) times[i] = static_cast<double>(i) / k;
    for (auto kind : kAllKinds) {
        const UpdatingFunction phi{kind};
        const std::size_t dim = phi.summary_dim(n);
        const double tol = (kind == UpdatingFunction::Kind::running_state ||
                            kind == UpdatingFunction::Kind::running_max) ? 0.0 : 1e-12;
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> x(k + 1);
            for (auto& v : x) v = normal(rng);
            const std::size_t s = 3 + rep % (k - 4);
            auto y = x;
            std::reverse(y.begin() + 1, y.begin() + static_cast<std::ptrdiff_t>(s));
            const auto zx = apply_updating(phi, times, x, n);
            const auto zy = apply_updating(phi, times, y, n);
            for (std::size_t node = s; node <= k; ++node)
                for (std::size_t c = 0; c < dim; ++c) CHECK(std::abs(zx[node * dim + c] - zy[node * dim + c]) <= tol);
        }
    }
}

TEST_CASE("initial laws sample their declared distributions", "[problems]") {
    const RandomStream stream({5, StreamRole::initial, 0, 0});
    std::vector<double> out(2);
    InitialLaw::dirac({1.0, -2.0}).sample(stream, out);
    CHECK(out == std::vector<double>{1.0, -2.0});

    const auto uni = InitialLaw::uniform({0.0, 5.0}, {1.0, 5.0});
    for (std::uint32_t p = 0; p < 200; ++p) {
        uni.sample(RandomStream({5, StreamRole::initial, 0, p}), out);
        CHECK(out[0] >= 0.0);
        CHECK(out[0] <= 1.0);
        CHECK(out[1] == 5.0);
    }

    const auto atoms = InitialLaw::from_atoms(EmpiricalMeasure::from_points({{3.0}, {4.0}}));
    std::vector<double> one(1);
    for (std::uint32_t p = 0; p < 50; ++p) {
        atoms.sample(RandomStream({5, StreamRole::initial, 0, p}), one);
        CHECK((one[0] == 3.0 || one[0] == 4.0));
    }
    CHECK_THROWS_AS(InitialLaw::gaussian({0.0}, {-1.0}), ConfigError);
}

TEST_CASE("problem validation names the broken piece", "[problems]") {
    auto spec = scalar_spec();
    spec.validate();
    spec.horizon = spec.t_start;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = scalar_spec();
    spec.coefficients.terminal = nullptr;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = scalar_spec();
    spec.initial = InitialLaw::dirac({0.0, 0.0});
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    LqSpec lq;
    lq.r = 0.0;
    CHECK_THROWS_AS(lq.validate(), ConfigError);
}

TEST_CASE("objective sign helpers", "[problems]") {
    auto spec = scalar_spec();
    CHECK(spec.sign() == 1.0);
    CHECK(spec.better(2.0, 1.0));
    CHECK_FALSE(spec.better(1.0, 1.0));
    spec.objective = Objective::minimize;
    CHECK(spec.better(1.0, 2.0));
}
