#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "json.hpp"
#include "wavetomo/config.hpp"

using namespace wavetomo;
using nlohmann::json;

namespace {

json minimal_forward() {
    return json::parse(R"({
      "kind": "forward",
      "grid": {"n": 1, "T": 1.0, "h": 0.05},
      "medium": {"zeroth": "c", "bumps": [
        {"field": "c", "center_x": [0.0], "center_t": 0.5, "radius_x": 0.5, "radius_t": 0.25, "amplitude": 1.0}]}
    })");
}

std::string error_field(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.field;
    }
    return "<no error>";
}

}  // namespace

TEST(Config, BundledConfigsParse) {
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(WAVETOMO_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        ++count;
        EXPECT_NO_THROW(load_config(entry.path().string())) << entry.path();
    }
    EXPECT_GE(count, 10);
}

TEST(Config, MinimalForwardDefaults) {
    const auto c = parse_config(minimal_forward());
    EXPECT_EQ(c.kind, Kind::forward);
    EXPECT_DOUBLE_EQ(c.grid.margin, 3.0);
    EXPECT_EQ(c.directions, ab_directions(1));
    EXPECT_EQ(c.medium.zeroth.bumps.size(), 1u);
    const auto g = c.make();
    EXPECT_EQ(c.taus(g).front(), -1.0);
}

TEST(Config, MissingFinalTimeNamesTheField) {
    auto j = minimal_forward();
    j["grid"].erase("T");
    EXPECT_EQ(error_field(j), "grid.T");
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("grid.T"), std::string::npos);
    }
}

TEST(Config, RejectsUnknownKeysAndKinds) {
    auto j = minimal_forward();
    j["grid"]["dx"] = 0.1;
    EXPECT_EQ(error_field(j), "grid.dx");
    j = minimal_forward();
    j["kind"] = "backward";
    EXPECT_EQ(error_field(j), "kind");
    j = minimal_forward();
    j["medium"]["bumps"][0]["colour"] = 1;
    EXPECT_EQ(error_field(j), "medium.bumps[0].colour");
}

TEST(Config, RejectsBadValues) {
    auto j = minimal_forward();
    j["grid"]["h"] = -0.1;
    EXPECT_EQ(error_field(j), "grid.h");
    j = minimal_forward();
    j["grid"]["margin"] = 2.0;
    EXPECT_EQ(error_field(j), "grid.margin");
    j = minimal_forward();
    j["directions"] = {"+e2"};
    EXPECT_EQ(error_field(j).rfind("directions", 0), 0u);
    j = minimal_forward();
    j["medium"]["bumps"][0]["center_x"] = {0.8};
    EXPECT_EQ(error_field(j), "medium");
    j = minimal_forward();
    j["medium"]["bumps"][0]["field"] = "q";
    EXPECT_EQ(error_field(j), "medium.bumps[0].field");
    j = minimal_forward();
    j["tau"] = {{"dtau", 0.07}};
    EXPECT_EQ(error_field(j), "tau.dtau");
}

TEST(Config, KindSpecificChecks) {
    auto j = minimal_forward();
    j["kind"] = "convergence";
    j["convergence"] = {{"h", {0.04, 0.02}}, {"taus", {0.2}}};
    EXPECT_EQ(error_field(j), "convergence.h");
    j["convergence"] = {{"h", {0.04, 0.03, 0.01}}, {"taus", {0.2}}};
    EXPECT_EQ(error_field(j), "convergence.h");
    j = minimal_forward();
    j["kind"] = "invert-q";
    EXPECT_EQ(error_field(j), "inversion");
    j["inversion"] = json::object();
    EXPECT_EQ(error_field(j), "medium.zeroth");
    j = minimal_forward();
    j["kind"] = "stability-abc";
    j["stability"] = {{"amplitudes", json::array()}};
    EXPECT_EQ(error_field(j), "stability.amplitudes");
}

TEST(Config, KindNamesRoundTrip) {
    for (const auto& [k, name] : kind_names()) {
        EXPECT_EQ(to_string(k), name);
        EXPECT_EQ(kind_from_string(name), k);
    }
    EXPECT_FALSE(kind_from_string("nope").has_value());
}

TEST(Config, UnreadableFileIsAConfigError) {
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}
