#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <string>

#include "mbfv/runner.hpp"

using namespace mbfv;

namespace {

bool has_error(const ConfigResult& res, const std::string& needle) {
    return std::any_of(res.errors.begin(), res.errors.end(),
                       [&](const std::string& e) { return e.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("minimal config parses with echoed defaults") {
    ConfigResult res = validate_config("seed = 42\n");
    REQUIRE(res.ok());
    CHECK(res.spec.seed == 42);
    CHECK(res.spec.scenario == "train-compare");
    CHECK(res.spec.users == 10);
    // every absent field is reported as a default actually used
    CHECK(res.defaults_used.size() == 12);
    bool users_noted = false;
    for (const auto& d : res.defaults_used) users_noted = users_noted || d == "users = 10";
    CHECK(users_noted);
}

TEST_CASE("missing seed is an explicit error") {
    ConfigResult res = validate_config("users = 5\n");
    CHECK(!res.ok());
    CHECK(has_error(res, "seed: required"));
}

TEST_CASE("out-of-range connection_rate names the valid interval") {
    ConfigResult res = validate_config("seed = 1\nconnection_rate = 1.5\n");
    CHECK(has_error(res, "connection_rate: must lie in [0,1]"));
    ConfigResult zero = validate_config("seed = 1\nconnection_rate = 0\n");
    CHECK(has_error(zero, "connection_rate: must be positive"));
}

TEST_CASE("unknown keys, duplicates, and malformed lines are all reported at once") {
    ConfigResult res = validate_config(
        "seed = 1\n"
        "bogus_key = 3\n"
        "users = 5\n"
        "users = 6\n"
        "no equals sign here\n"
        "eta = fast\n");
    CHECK(!res.ok());
    CHECK(has_error(res, "bogus_key: unknown field"));
    CHECK(has_error(res, "users: duplicate assignment (line 4)"));
    CHECK(has_error(res, "line 5: expected key = value"));
    CHECK(has_error(res, "eta: expected a number, got 'fast'"));
    CHECK(res.errors.size() == 4);
    CHECK(res.spec.users == 5);  // first assignment wins
}

TEST_CASE("enumerated fields reject unknown values") {
    ConfigResult res = validate_config(
        "seed = 1\nscenario = train\nkey_scope = local\nring_preset = n64\n");
    CHECK(has_error(res, "scenario: must be one of unit-bench | train-compare | comm-table"));
    CHECK(has_error(res, "key_scope: must be 'neighborhood' or 'global'"));
    CHECK(has_error(res, "ring_preset: must be one of"));
}

TEST_CASE("range constraints on numeric fields") {
    ConfigResult res = validate_config(
        "seed = 1\nusers = 1\nfrac_bits = 31\nweight_bits = 0\niterations = 0\nbatch = 0\n"
        "repeats = 0\n");
    CHECK(has_error(res, "users: must be >= 2"));
    CHECK(has_error(res, "frac_bits: must be in [1,30]"));
    CHECK(has_error(res, "weight_bits: must be in [1,30]"));
    CHECK(has_error(res, "iterations: must be >= 1"));
    CHECK(has_error(res, "batch: must be >= 1"));
    CHECK(has_error(res, "repeats: must be >= 1"));
}

TEST_CASE("comments and blank lines are ignored") {
    ConfigResult res = validate_config(
        "# experiment\n"
        "\n"
        "seed = 7   # reproducibility\n"
        "users = 4\n");
    REQUIRE(res.ok());
    CHECK(res.spec.seed == 7);
    CHECK(res.spec.users == 4);
}

TEST_CASE("spec echo roundtrips through the parser") {
    ConfigResult first = validate_config(
        "seed = 11\nscenario = comm-table\nusers = 6\nconnection_rate = 0.25\n"
        "key_scope = global\neta = 0.05\n");
    REQUIRE(first.ok());
    ConfigResult second = validate_config(spec_echo(first.spec));
    REQUIRE(second.ok());
    CHECK(spec_echo(second.spec) == spec_echo(first.spec));
    CHECK(second.defaults_used.empty());  // echo spells out every field
}

TEST_CASE("train-compare runs are bit-identical apart from timings") {
    ExperimentSpec spec;
    spec.scenario = "train-compare";
    spec.users = 4;
    spec.iterations = 3;
    spec.seed = 21;
    RunOutput a = run_experiment(spec);
    RunOutput b = run_experiment(spec);
    REQUIRE(a.files.count("accuracy.csv") == 1);
    REQUIRE(a.files.count("meters.csv") == 1);
    REQUIRE(a.files.count("summary.txt") == 1);
    for (const auto& [name, content] : a.files) {
        if (name == "timings.csv") continue;
        CHECK(content == b.files.at(name));
    }
    CHECK(a.metrics.at("max_param_divergence") == b.metrics.at("max_param_divergence"));
}

TEST_CASE("comm-table units are affine in the degree") {
    ExperimentSpec spec;
    spec.scenario = "comm-table";
    spec.users = 20;
    spec.connection_rate = 0.2;
    spec.iterations = 2;
    spec.seed = 33;
    RunOutput out = run_experiment(spec);
    REQUIRE(out.files.count("comm.csv") == 1);
    CHECK(out.files.at("comm.csv").substr(0, 23) == "user,degree,units,bytes");
    for (std::size_t i = 0; i < spec.users; ++i) {
        double deg = out.metrics.at("degree_user_" + std::to_string(i));
        double units = out.metrics.at("units_user_" + std::to_string(i));
        CHECK(units == 2.0 * deg + 1.0);
    }
}

TEST_CASE("unit bench: the larger ring costs more") {
    ExperimentSpec spec;
    spec.scenario = "unit-bench";
    spec.seed = 3;
    spec.repeats = 25;
    RunOutput out = run_experiment(spec);
    REQUIRE(out.files.count("timings.csv") == 1);
    double small = out.metrics.at("n2048.encryption") + out.metrics.at("n2048.decryption");
    double large = out.metrics.at("n4096.encryption") + out.metrics.at("n4096.decryption");
    CHECK(large > small);
}

TEST_CASE("unknown scenario surfaces as a runtime error") {
    ExperimentSpec spec;
    spec.scenario = "does-not-exist";
    CHECK_THROWS(run_experiment(spec));
}
