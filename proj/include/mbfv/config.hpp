#pragma once

// Flat key=value experiment configs. One format, no overrides; the parsed
// spec echoes every default so a run is reproducible from its summary alone.

#include <cstdint>
#include <iomanip>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mbfv/dpsgd.hpp"
#include "mbfv/ring.hpp"

namespace mbfv {

struct ExperimentSpec {
    std::string scenario = "train-compare";
    std::size_t users = 10;
    double connection_rate = 0.5;
    KeyScope key_scope = KeyScope::neighborhood;
    std::string ring_preset = "n32";
    int frac_bits = 13;
    int weight_bits = 16;
    double eta = 0.1;
    std::size_t iterations = 30;
    std::size_t batch = 8;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::size_t repeats = 1;

    TrainConfig train_config() const {
        TrainConfig cfg;
        cfg.eta = eta;
        cfg.iterations = iterations;
        cfg.batch_size = batch;
        cfg.key_scope = key_scope;
        cfg.frac_bits = frac_bits;
        cfg.weight_bits = weight_bits;
        cfg.ring_preset = ring_preset;
        cfg.seed = seed;
        return cfg;
    }
};

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

/// Canonical key=value text for a spec, every field present.
inline std::string spec_echo(const ExperimentSpec& s) {
    std::ostringstream os;
    os << "scenario = " << s.scenario << "\n";
    os << "users = " << s.users << "\n";
    os << "connection_rate = " << format_double(s.connection_rate) << "\n";
    os << "key_scope = " << (s.key_scope == KeyScope::global ? "global" : "neighborhood") << "\n";
    os << "ring_preset = " << s.ring_preset << "\n";
    os << "frac_bits = " << s.frac_bits << "\n";
    os << "weight_bits = " << s.weight_bits << "\n";
    os << "eta = " << format_double(s.eta) << "\n";
    os << "iterations = " << s.iterations << "\n";
    os << "batch = " << s.batch << "\n";
    os << "seed = " << s.seed << "\n";
    os << "output_dir = " << s.output_dir << "\n";
    os << "repeats = " << s.repeats << "\n";
    return os.str();
}

struct ConfigResult {
    ExperimentSpec spec;
    std::vector<std::string> errors;         // "field: constraint" or "line N: ..."
    std::vector<std::string> defaults_used;  // "key = value" for every absent field
    bool ok() const { return errors.empty(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline bool parse_u64(const std::string& v, std::uint64_t& out) {
    if (v.empty()) return false;
    std::uint64_t acc = 0;
    for (char c : v) {
        if (c < '0' || c > '9') return false;
        std::uint64_t d = static_cast<std::uint64_t>(c - '0');
        if (acc > (UINT64_MAX - d) / 10) return false;
        acc = acc * 10 + d;
    }
    out = acc;
    return true;
}

inline bool parse_f64(const std::string& v, double& out) {
    std::istringstream is(v);
    double d = 0.0;
    if (!(is >> d)) return false;
    std::string rest;
    if (is >> rest) return false;
    out = d;
    return true;
}

}  // namespace detail

/// Parse and validate a flat key=value config. All field errors are
/// reported at once; nothing throws.
inline ConfigResult validate_config(const std::string& text) {
    using detail::trim;
    ConfigResult res;
    ExperimentSpec& spec = res.spec;
    std::set<std::string> seen;

    auto fail = [&](const std::string& msg) { res.errors.push_back(msg); };

    std::istringstream lines(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            fail("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) {
            fail("line " + std::to_string(lineno) + ": expected key = value");
            continue;
        }
        if (!seen.insert(key).second) {
            fail(key + ": duplicate assignment (line " + std::to_string(lineno) + ")");
            continue;
        }

        std::uint64_t u = 0;
        double d = 0.0;
        if (key == "scenario") {
            spec.scenario = val;
        } else if (key == "users") {
            if (detail::parse_u64(val, u)) spec.users = u;
            else fail("users: expected a non-negative integer, got '" + val + "'");
        } else if (key == "connection_rate") {
            if (detail::parse_f64(val, d)) spec.connection_rate = d;
            else fail("connection_rate: expected a number, got '" + val + "'");
        } else if (key == "key_scope") {
            if (val == "neighborhood") spec.key_scope = KeyScope::neighborhood;
            else if (val == "global") spec.key_scope = KeyScope::global;
            else fail("key_scope: must be 'neighborhood' or 'global', got '" + val + "'");
        } else if (key == "ring_preset") {
            spec.ring_preset = val;
        } else if (key == "frac_bits") {
            if (detail::parse_u64(val, u)) spec.frac_bits = static_cast<int>(u);
            else fail("frac_bits: expected a non-negative integer, got '" + val + "'");
        } else if (key == "weight_bits") {
            if (detail::parse_u64(val, u)) spec.weight_bits = static_cast<int>(u);
            else fail("weight_bits: expected a non-negative integer, got '" + val + "'");
        } else if (key == "eta") {
            if (detail::parse_f64(val, d)) spec.eta = d;
            else fail("eta: expected a number, got '" + val + "'");
        } else if (key == "iterations") {
            if (detail::parse_u64(val, u)) spec.iterations = u;
            else fail("iterations: expected a non-negative integer, got '" + val + "'");
        } else if (key == "batch") {
            if (detail::parse_u64(val, u)) spec.batch = u;
            else fail("batch: expected a non-negative integer, got '" + val + "'");
        } else if (key == "seed") {
            if (detail::parse_u64(val, u)) spec.seed = u;
            else fail("seed: expected a non-negative integer, got '" + val + "'");
        } else if (key == "output_dir") {
            spec.output_dir = val;
        } else if (key == "repeats") {
            if (detail::parse_u64(val, u)) spec.repeats = u;
            else fail("repeats: expected a non-negative integer, got '" + val + "'");
        } else {
            fail(key + ": unknown field");
        }
    }

    // range constraints, checked even when the value came from a default
    static const std::set<std::string> kScenarios{"unit-bench", "train-compare", "comm-table"};
    if (!kScenarios.count(spec.scenario))
        res.errors.push_back("scenario: must be one of unit-bench | train-compare | comm-table");
    if (spec.users < 2) res.errors.push_back("users: must be >= 2");
    if (spec.connection_rate < 0.0 || spec.connection_rate > 1.0)
        res.errors.push_back("connection_rate: must lie in [0,1]");
    else if (spec.connection_rate == 0.0)
        res.errors.push_back("connection_rate: must be positive");
    {
        auto names = preset_names();
        bool known = false;
        for (const auto& p : names) known = known || p == spec.ring_preset;
        if (!known) {
            std::string list;
            for (const auto& p : names) list += (list.empty() ? "" : " | ") + p;
            res.errors.push_back("ring_preset: must be one of " + list);
        }
    }
    if (spec.frac_bits < 1 || spec.frac_bits > 30)
        res.errors.push_back("frac_bits: must be in [1,30]");
    if (spec.weight_bits < 1 || spec.weight_bits > 30)
        res.errors.push_back("weight_bits: must be in [1,30]");
    if (!(spec.eta > 0.0)) res.errors.push_back("eta: must be positive");
    if (spec.iterations < 1) res.errors.push_back("iterations: must be >= 1");
    if (spec.batch < 1) res.errors.push_back("batch: must be >= 1");
    if (!seen.count("seed")) res.errors.push_back("seed: required, no silent default");
    if (spec.output_dir.empty()) res.errors.push_back("output_dir: must be non-empty");
    if (spec.repeats < 1) res.errors.push_back("repeats: must be >= 1");

    // echo every default actually used
    ExperimentSpec defaults;
    auto note = [&](const char* key, const std::string& v) {
        if (!seen.count(key)) res.defaults_used.push_back(std::string(key) + " = " + v);
    };
    note("scenario", defaults.scenario);
    note("users", std::to_string(defaults.users));
    note("connection_rate", format_double(defaults.connection_rate));
    note("key_scope", "neighborhood");
    note("ring_preset", defaults.ring_preset);
    note("frac_bits", std::to_string(defaults.frac_bits));
    note("weight_bits", std::to_string(defaults.weight_bits));
    note("eta", format_double(defaults.eta));
    note("iterations", std::to_string(defaults.iterations));
    note("batch", std::to_string(defaults.batch));
    note("output_dir", defaults.output_dir);
    note("repeats", std::to_string(defaults.repeats));
    return res;
}

}  // namespace mbfv
