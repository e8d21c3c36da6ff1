#include <catch_amalgamated.hpp>

#include "mkv/config.hpp"
#include "mkv/error.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

using namespace mkv;
using Catch::Matchers::ContainsSubstring;

namespace {

const std::filesystem::path kConfigs{MKV_CONFIG_DIR};

nlohmann::json base_doc() {
    return nlohmann::json::parse(R"({
      "schema": "mkvlab/1",
      "seed": 3,
      "problem": {"template": "lqcn", "preset": "LQCN-1"},
      "grid": {"steps": 10},
      "simulation": {"scenarios": 2, "particles": 3},
      "policy": {"info_class": "feedback", "family": "linear-feedback", "params": [0.0, -1.0, 0.0]}
    })");
}

std::string error_of(const nlohmann::json& doc) {
    try {
        (void)parse_config(doc.dump());
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("every shipped config parses", "[config]") {
    std::size_t count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(kConfigs)) {
        if (entry.path().extension() != ".json") continue;
        INFO(entry.path().filename().string());
        CHECK_NOTHROW(parse_config(read_text_file(entry.path())));
        ++count;
    }
    CHECK(count >= 19);
}

TEST_CASE("a minimal document fills the experiment", "[config]") {
    const auto cfg = parse_config(base_doc().dump());
    CHECK(cfg.seed == 3);
    CHECK(cfg.sim.seed == 3);
    CHECK(cfg.sim.scenarios == 2);
    CHECK(cfg.sim.particles == 3);
    CHECK(cfg.grid().steps() == 10);
    CHECK(cfg.require_problem().objective == Objective::minimize);
    REQUIRE(cfg.policy);
    CHECK(cfg.policy->params == std::vector<double>{0.0, -1.0, 0.0});
    CHECK_FALSE(cfg.dpp);
}

TEST_CASE("the seed override wins", "[config]") {
    const auto cfg = parse_config(base_doc().dump(), 99);
    CHECK(cfg.seed == 99);
    CHECK(cfg.sim.seed == 99);
}

TEST_CASE("errors name the offending field", "[config]") {
    auto doc = base_doc();
    doc["grid"]["steps"] = 0;
    CHECK_THAT(error_of(doc), ContainsSubstring("grid.steps"));

    doc = base_doc();
    doc["grid"].erase("steps");
    CHECK_THAT(error_of(doc), ContainsSubstring("grid.steps"));

    doc = base_doc();
    doc["simulation"]["particles"] = -1;
    CHECK_THAT(error_of(doc), ContainsSubstring("simulation.particles"));

    doc = base_doc();
    doc["simulation"]["speed"] = 1;
    CHECK_THAT(error_of(doc), ContainsSubstring("simulation.speed"));
    CHECK_THAT(error_of(doc), ContainsSubstring("unknown key"));

    doc = base_doc();
    doc["problem"]["preset"] = "LQCN-3";
    CHECK_THAT(error_of(doc), ContainsSubstring("problem.preset"));

    doc = base_doc();
    doc["schema"] = "mkvlab/0";
    CHECK_THAT(error_of(doc), ContainsSubstring("schema"));

    doc = base_doc();
    doc["policy"]["family"] = "neural";
    CHECK_THAT(error_of(doc), ContainsSubstring("policy"));

    doc = base_doc();
    doc.erase("problem");
    CHECK_THAT(error_of(doc), ContainsSubstring("problem"));

    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
}

TEST_CASE("explicit templates build problems", "[config]") {
    auto doc = base_doc();
    doc["problem"] = nlohmann::json::parse(R"({
      "template": "linear", "dims": {"state": 1, "idio": 1, "common": 1, "control": 1},
      "horizon": 2.0, "objective": "minimize",
      "params": {"a": [0.5], "b": [1.0], "sigma": [0.3], "sigma0": [0.2],
                 "running": {"q": 1.0, "r": 0.5}, "terminal": {"q": 2.0}},
      "initial": {"kind": "uniform", "lo": [-1.0], "hi": [1.0]},
      "controls": {"lo": [-2.0], "hi": [2.0]}
    })");
    const auto cfg = parse_config(doc.dump());
    const auto& p = cfg.require_problem();
    CHECK(p.horizon == 2.0);
    CHECK(p.dims.common == 1);
    CHECK(p.controls.hi()[0] == 2.0);
    CHECK(cfg.grid().end() == 2.0);
    CHECK_NOTHROW(p.validate());

    doc["problem"]["controls"] = {{"lo", {1.0}}, {"hi", {-1.0}}};
    CHECK_THAT(error_of(doc), ContainsSubstring("problem.controls"));
}

TEST_CASE("policies round trip through JSON", "[config]") {
    const ControlBox box({-10.0}, {10.0});
    Policy p;
    p.info_class = InfoClass::strong;
    p.family = PolicyFamily::table;
    p.segments = 2;
    p.params = {0.1, -1.0, 0.0, 0.2, -0.5, 0.3};
    p.clip = ControlBox({-3.0}, {3.0});
    const auto back = policy_from_json(policy_to_json(p), box);
    CHECK(back.info_class == p.info_class);
    CHECK(back.family == p.family);
    CHECK(back.segments == 2);
    CHECK(back.params == p.params);
    CHECK(back.clip.hi()[0] == 3.0);

    const auto defaulted = policy_from_json(R"({"info_class": "b-strong", "family": "constant", "params": [0.5]})", box);
    CHECK(defaulted.clip.lo()[0] == -10.0);
    CHECK_THROWS_AS(policy_from_json(R"({"info_class": "b-strong", "family": "constant"})", box), ConfigError);
}

TEST_CASE("discrete instances load from the config", "[config]") {
    const auto cfg = parse_config(read_text_file(kConfigs / "discrete_two_state.json"));
    REQUIRE(cfg.discrete);
    CHECK_FALSE(cfg.discrete->instances.empty());
    for (const auto& pb : cfg.discrete->instances) CHECK_NOTHROW(pb.validate());
}
