#include <catch_amalgamated.hpp>

#include "mkv/error.hpp"
#include "mkv/policy.hpp"
#include "mkv/simulator.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

using namespace mkv;
using mkv::testing::scalar_spec;
using Catch::Matchers::WithinAbs;

namespace {

Policy make(InfoClass info, PolicyFamily family, std::vector<double> params, double bound = 1.0) {
    Policy p;
    p.info_class = info;
    p.family = family;
    p.params = std::move(params);
    p.clip = ControlBox({-bound}, {bound});
    return p;
}

FeedbackView feedback_at(const std::vector<double>& x, const SliceStats* slice = nullptr, double t = 0.0) {
    return FeedbackView{t, 0, x, slice};
}

}  // namespace

TEST_CASE("evaluate examples", "[policies]") {
    const auto constant = make(InfoClass::b_strong, PolicyFamily::constant, {0.3});
    for (double t : {0.0, 0.4, 1.0}) CHECK(evaluate(constant, BStrongView{t, 0, {}, nullptr})[0] == 0.3);

    const auto fb = make(InfoClass::feedback, PolicyFamily::linear_feedback, {0.0, -1.0, 0.0}, 10.0);
    const std::vector<double> x{0.7};
    CHECK(evaluate(fb, feedback_at(x))[0] == -0.7);

    const auto clipped = make(InfoClass::feedback, PolicyFamily::linear_feedback, {0.0, -1.0, 0.0});
    const std::vector<double> five{5.0};
    CHECK(evaluate(clipped, feedback_at(five))[0] == -1.0);
}

TEST_CASE("linear feedback reads the slice mean", "[policies]") {
    SliceStats stats;
    stats.state_mean = {2.0};
    stats.state_second = {5.0};
    const auto p = make(InfoClass::feedback, PolicyFamily::linear_feedback, {0.1, -1.0, 0.5}, 10.0);
    const std::vector<double> x{1.0};
    CHECK_THAT(evaluate(p, feedback_at(x, &stats))[0], WithinAbs(0.1 - 1.0 + 1.0, 1e-15));
    CHECK_THROWS_AS(evaluate(p, feedback_at(x)), ConfigError);
}

TEST_CASE("piecewise constant and table families switch by segment", "[policies]") {
    auto pc = make(InfoClass::b_strong, PolicyFamily::piecewise_constant, {-0.5, 0.0, 0.5});
    pc.segments = 3;
    pc.validate();
    CHECK(evaluate(pc, BStrongView{0.1, 0, {}, nullptr})[0] == -0.5);
    CHECK(evaluate(pc, BStrongView{0.5, 0, {}, nullptr})[0] == 0.0);
    CHECK(evaluate(pc, BStrongView{0.9, 0, {}, nullptr})[0] == 0.5);
    CHECK(evaluate(pc, BStrongView{1.0, 0, {}, nullptr})[0] == 0.5);

    auto table = make(InfoClass::feedback, PolicyFamily::table, {0.0, -1.0, 0.0, 0.2, 0.0, 0.0}, 5.0);
    table.segments = 2;
    table.validate();
    const std::vector<double> x{2.0};
    CHECK(evaluate(table, feedback_at(x, nullptr, 0.25))[0] == -2.0);
    CHECK(evaluate(table, feedback_at(x, nullptr, 0.75))[0] == 0.2);
}

TEST_CASE("randomized strong policies add bounded noise", "[policies]") {
    auto p = make(InfoClass::strong, PolicyFamily::constant, {0.0, 0.4});
    p.randomized = true;
    p.validate();
    const std::vector<double> x{0.0};
    for (double eta : {0.0, 0.25, 0.5, 1.0}) {
        StrongView v{0.0, 0, {}, {}, {}, x, nullptr, eta};
        CHECK_THAT(evaluate(p, v)[0], WithinAbs(0.4 * (2.0 * eta - 1.0), 1e-15));
    }
    auto bad = p;
    bad.info_class = InfoClass::feedback;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("parameter counts and class restrictions are checked", "[policies]") {
    CHECK_THROWS_AS(make(InfoClass::feedback, PolicyFamily::linear_feedback, {0.0, 1.0}).validate(), ConfigError);
    CHECK_THROWS_AS(make(InfoClass::b_strong, PolicyFamily::linear_feedback, {0.0, 1.0, 0.0}).validate(),
                    ConfigError);
    make(InfoClass::b_strong, PolicyFamily::linear_feedback, {0.0, 0.0, -1.0}).validate();
    // a feedback rule cannot run on a strong view and vice versa
    const auto fb = make(InfoClass::feedback, PolicyFamily::constant, {0.1});
    CHECK_THROWS_AS(evaluate(fb, StrongView{}), ConfigError);
    const auto st = make(InfoClass::strong, PolicyFamily::constant, {0.1});
    CHECK_THROWS_AS(evaluate(st, FeedbackView{}), ConfigError);
    // b-strong rules run on any view
    const auto bs = make(InfoClass::b_strong, PolicyFamily::constant, {0.1});
    CHECK(evaluate(bs, StrongView{})[0] == 0.1);
    CHECK(evaluate(bs, FeedbackView{})[0] == 0.1);
}

TEST_CASE("clipping is idempotent", "[policies][property]") {
    const auto p = make(InfoClass::feedback, PolicyFamily::linear_feedback, {0.2, 1.3, 0.0});
    for (double x = -3.0; x <= 3.0; x += 0.125) {
        const std::vector<double> xv{x};
        auto u = evaluate(p, feedback_at(xv));
        CHECK(p.clip.contains(u));
        auto again = u;
        p.clip.clip(again);
        CHECK(again == u);
    }
}

TEST_CASE("family_grid examples", "[policies]") {
    const std::vector<std::pair<double, double>> one{{-1.0, 1.0}};
    const auto g = family_grid(one, 3);
    REQUIRE(g.size() == 3);
    CHECK(g[0][0] == -1.0);
    CHECK(g[1][0] == 0.0);
    CHECK(g[2][0] == 1.0);

    const std::vector<std::pair<double, double>> two{{0.0, 1.0}, {0.0, 1.0}};
    const auto g2 = family_grid(two, 2);
    CHECK(g2.size() == 4);
    CHECK(g2[1] == std::vector<double>{0.0, 1.0});  // first coordinate slowest

    const std::vector<std::pair<double, double>> gain{{-2.0, 0.0}};
    const auto gains = family_grid(gain, 41);
    CHECK(std::count(gains.begin(), gains.end(), std::vector<double>{-1.0}) == 1);

    CHECK(family_grid(one, 1)[0][0] == 0.0);
    const std::vector<std::pair<double, double>> big(3, {0.0, 1.0});
    CHECK_THROWS_AS(family_grid(big, 101), GuardError);
    CHECK_THROWS_AS(family_grid(one, 0), ConfigError);
}

TEST_CASE("owned views are isolated from their source", "[policies][property]") {
    std::vector<double> summary{1.5};
    SliceStats stats;
    stats.state_mean = {0.5};
    stats.state_second = {1.0};
    const OwnedView owned(FeedbackView{0.0, 0, summary, &stats});
    const auto p = make(InfoClass::feedback, PolicyFamily::linear_feedback, {0.0, -1.0, 1.0}, 10.0);
    const double before = evaluate(p, owned.view())[0];
    summary[0] = 100.0;
    stats.state_mean[0] = -100.0;
    CHECK(evaluate(p, owned.view())[0] == before);
    const OwnedView copy = owned;
    CHECK(evaluate(p, copy.view())[0] == before);
    CHECK(owned.info_class() == InfoClass::feedback);
}

TEST_CASE("splicing hands over at the switch time", "[policies]") {
    const auto head = make(InfoClass::b_strong, PolicyFamily::constant, {-0.5});
    const auto tail = make(InfoClass::feedback, PolicyFamily::linear_feedback, {0.0, -1.0, 0.0});
    const auto spliced = splice(head, tail, 0.5);
    const std::vector<double> x{0.25};
    CHECK(evaluate(spliced, FeedbackView{0.49, 0, x, nullptr})[0] == -0.5);
    CHECK(evaluate(spliced, FeedbackView{0.5, 0, x, nullptr})[0] == -0.25);
    CHECK(spliced.widest_class() == InfoClass::feedback);
    CHECK(spliced.needs_summary());
}

TEST_CASE("info views expose only class-permitted, strictly prior data", "[policies]") {
    auto spec = scalar_spec(1.0, 1.0);
    const auto policy = make(InfoClass::feedback, PolicyFamily::linear_feedback, {0.0, -1.0, 0.0});
    const TimeGrid grid(0.0, 1.0, 10);
    const auto ens = simulate(spec, policy, grid, {3, 4, 17, 1});

    const auto b0 = info_views(ens, InfoClass::b_strong, 1, 2, 0);
    const auto& bview = std::get<BStrongView>(b0.view());
    CHECK(bview.common_history.empty());

    for (std::size_t k : {0u, 1u, 5u, 10u}) {
        const auto sv = info_views(ens, InfoClass::strong, 1, 2, k);
        const auto& strong = std::get<StrongView>(sv.view());
        REQUIRE(strong.idio_history.size() == k);
        REQUIRE(strong.common_history.size() == k);
        const std::size_t g = ens.index(1, 2);
        for (std::size_t j = 0; j < k; ++j) {
            CHECK(strong.idio_history[j] == ens.idio(g, j)[0]);
            CHECK(strong.common_history[j] == ens.common(1, j)[0]);
        }
        CHECK(strong.state[0] == ens.state(g, k)[0]);
        CHECK(strong.initial_state[0] == ens.state(g, 0)[0]);
    }

    // feedback slice moments match the within-scenario slice at t_k
    for (std::size_t k : {0u, 3u, 7u}) {
        const auto fv = info_views(ens, InfoClass::feedback, 2, 1, k);
        const auto& feedback = std::get<FeedbackView>(fv.view());
        const auto slices = conditional_slices(ens, k);
        CHECK_THAT(feedback.slice->state_mean[0], WithinAbs(slices[2].state.mean()[0], 1e-15));
        CHECK(feedback.summary[0] == ens.state(ens.index(2, 1), k)[0]);
    }
}

TEST_CASE("b-strong rules run as strong rules give identical ensembles", "[policies][property]") {
    const auto spec = make_lq_problem(LqSpec::lqcn1(), InitialLaw::gaussian({0.0}, {1.0}), 10.0, "LQCN-1");
    const TimeGrid grid(0.0, 1.0, 20);
    for (const auto& params : {std::vector<double>{0.3, 0.0, 0.0}, std::vector<double>{0.0, 0.0, -1.0}}) {
        auto as_b = make(InfoClass::b_strong, PolicyFamily::linear_feedback, params, 10.0);
        auto as_strong = as_b;
        as_strong.info_class = InfoClass::strong;
        const auto a = simulate(spec, as_b, grid, {5, 20, 3, 1});
        const auto b = simulate(spec, as_strong, grid, {5, 20, 3, 1});
        CHECK(a.states == b.states);
        CHECK(a.controls == b.controls);
        CHECK(a.total_reward == b.total_reward);
    }
}

TEST_CASE("names round trip", "[policies]") {
    for (auto c : {InfoClass::b_strong, InfoClass::strong, InfoClass::feedback})
        CHECK(info_class_from_string(to_string(c)) == c);
    for (auto f : {PolicyFamily::constant, PolicyFamily::piecewise_constant, PolicyFamily::linear_feedback,
                   PolicyFamily::table})
        CHECK(policy_family_from_string(to_string(f)) == f);
    CHECK_THROWS_AS(info_class_from_string("weak"), ConfigError);
}
