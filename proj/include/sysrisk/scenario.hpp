#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "sysrisk/errors.hpp"
#include "sysrisk/hashing.hpp"
#include "sysrisk/io.hpp"
#include "sysrisk/model.hpp"
#include "sysrisk/rng.hpp"

namespace sysrisk {

struct Provenance {
    std::string source;
    std::uint64_t content_hash = 0;
};

/// A fully validated run description: bank parameters, correlation structure,
/// flow matrix and simulation settings.
struct Scenario {
    BankParams params;
    CorrelationStructure corr;
    FlowRateMatrix flows;
    SimulationConfig config;
    Provenance provenance;

    /// Structural fingerprint of the resolved inputs (randomized bank
    /// parameters are hashed after drawing).
    std::uint64_t fingerprint() const {
        Hasher h;
        params.hash_into(h);
        corr.hash_into(h);
        flows.hash_into(h);
        config.hash_into(h);
        return h.value();
    }
};

namespace detail_json {

using nlohmann::json;

inline void check_keys(const json& obj, std::string_view path,
                       std::initializer_list<std::string_view> allowed) {
    for (const auto& item : obj.items()) {
        bool ok = false;
        for (auto a : allowed)
            if (item.key() == a) {
                ok = true;
                break;
            }
        if (!ok)
            throw ValidationError(std::string(path) + ": unknown key '" + item.key() + "'");
    }
}

inline const json& member(const json& obj, std::string_view path, std::string_view key) {
    const auto it = obj.find(key);
    if (it == obj.end())
        throw ValidationError(std::string(path) + ": missing required key '" + std::string(key) + "'");
    return *it;
}

inline double as_double(const json& j, std::string_view path) {
    if (!j.is_number()) throw ValidationError(std::string(path) + ": expected a number");
    return j.get<double>();
}

inline std::uint64_t as_u64(const json& j, std::string_view path) {
    if (!j.is_number_unsigned() && !j.is_number_integer())
        throw ValidationError(std::string(path) + ": expected an integer");
    if (j.is_number_integer() && j.get<std::int64_t>() < 0)
        throw ValidationError(std::string(path) + ": must be >= 0");
    return j.get<std::uint64_t>();
}

inline std::size_t as_count(const json& j, std::string_view path) {
    const std::uint64_t v = as_u64(j, path);
    if (v == 0) throw ValidationError(std::string(path) + ": must be >= 1");
    return static_cast<std::size_t>(v);
}

inline Vec as_vector(const json& j, std::string_view path) {
    if (!j.is_array()) throw ValidationError(std::string(path) + ": expected an array of numbers");
    Vec out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        out.push_back(as_double(j[i], std::string(path) + "[" + std::to_string(i) + "]"));
    return out;
}

inline Mat as_matrix(const json& j, std::string_view path) {
    if (!j.is_array() || j.empty())
        throw ValidationError(std::string(path) + ": expected an array of rows");
    const std::size_t n = j.size();
    Mat m(n, j[0].size());
    for (std::size_t i = 0; i < n; ++i) {
        const Vec row = as_vector(j[i], std::string(path) + "[" + std::to_string(i) + "]");
        if (row.size() != m.cols())
            throw ValidationError(std::string(path) + ": rows must have equal length");
        for (std::size_t k = 0; k < row.size(); ++k) m(i, k) = row[k];
    }
    return m;
}

inline BankParams parse_banks(const json& j) {
    check_keys(j, "banks", {"mu", "sigma", "n", "mu_uniform", "sigma_uniform", "param_seed"});
    BankParams p;
    if (j.contains("mu") || j.contains("sigma")) {
        if (j.contains("n") || j.contains("mu_uniform") || j.contains("sigma_uniform"))
            throw ValidationError("banks: give either mu/sigma arrays or the n/uniform form, not both");
        p.mu = as_vector(member(j, "banks", "mu"), "banks.mu");
        p.sigma = as_vector(member(j, "banks", "sigma"), "banks.sigma");
    } else {
        const std::size_t n = as_count(member(j, "banks", "n"), "banks.n");
        const Vec mu_range = as_vector(member(j, "banks", "mu_uniform"), "banks.mu_uniform");
        const Vec sg_range = as_vector(member(j, "banks", "sigma_uniform"), "banks.sigma_uniform");
        if (mu_range.size() != 2 || sg_range.size() != 2)
            throw ValidationError("banks.mu_uniform / banks.sigma_uniform: expected [lo, hi]");
        const std::uint64_t seed = as_u64(member(j, "banks", "param_seed"), "banks.param_seed");
        // All mu are drawn first, then all sigma, from one stream.
        NormalRng rng(mix_seed(seed, 0x50415241u));
        p.mu.resize(n);
        p.sigma.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            p.mu[i] = mu_range[0] + (mu_range[1] - mu_range[0]) * rng.uniform();
        for (std::size_t i = 0; i < n; ++i)
            p.sigma[i] = sg_range[0] + (sg_range[1] - sg_range[0]) * rng.uniform();
    }
    p.validate();
    return p;
}

inline CorrelationStructure parse_correlation(const json& j, std::size_t n) {
    check_keys(j, "correlation", {"kind", "rho_pair", "matrix"});
    const std::string kind = member(j, "correlation", "kind").get<std::string>();
    CorrelationStructure c;
    if (kind == "independent") {
        c = CorrelationStructure::independent();
    } else if (kind == "identical") {
        c = CorrelationStructure::identical();
    } else if (kind == "one_factor") {
        c = CorrelationStructure::one_factor(
            as_double(member(j, "correlation", "rho_pair"), "correlation.rho_pair"));
    } else if (kind == "explicit") {
        c = CorrelationStructure::explicit_matrix(
            as_matrix(member(j, "correlation", "matrix"), "correlation.matrix"));
    } else {
        throw ValidationError("correlation.kind: unknown kind '" + kind + "'");
    }
    c.validate(n);
    return c;
}

inline FlowModulation parse_modulation(const json& j) {
    check_keys(j, "flows.modulation", {"kind", "f_floor", "f_scale"});
    const std::string kind = member(j, "flows.modulation", "kind").get<std::string>();
    if (kind == "constant") return FlowModulation::constant();
    if (kind == "norm_dependent") {
        FlowModulation m = FlowModulation::norm_dependent(
            as_double(member(j, "flows.modulation", "f_floor"), "flows.modulation.f_floor"),
            as_double(member(j, "flows.modulation", "f_scale"), "flows.modulation.f_scale"));
        m.validate();
        return m;
    }
    throw ValidationError("flows.modulation.kind: unknown kind '" + kind + "'");
}

inline FlowRateMatrix parse_flows(const json& j, std::size_t n) {
    check_keys(j, "flows", {"kind", "value", "blocks", "matrix", "modulation"});
    const std::string kind = member(j, "flows", "kind").get<std::string>();
    FlowRateMatrix f;
    if (kind == "zero") {
        f = zero_flows(n);
    } else if (kind == "constant") {
        f = constant_flows(n, as_double(member(j, "flows", "value"), "flows.value"));
    } else if (kind == "block") {
        std::vector<FlowBlock> blocks;
        const json& jb = member(j, "flows", "blocks");
        if (!jb.is_array()) throw ValidationError("flows.blocks: expected an array");
        for (std::size_t b = 0; b < jb.size(); ++b) {
            const std::string path = "flows.blocks[" + std::to_string(b) + "]";
            check_keys(jb[b], path, {"start", "end", "value"});
            FlowBlock blk;
            blk.start = static_cast<std::size_t>(as_u64(member(jb[b], path, "start"), path + ".start"));
            blk.end = static_cast<std::size_t>(as_u64(member(jb[b], path, "end"), path + ".end"));
            blk.value = as_double(member(jb[b], path, "value"), path + ".value");
            blocks.push_back(blk);
        }
        const double background = j.contains("value") ? as_double(j["value"], "flows.value") : 0.0;
        f = block_flows(n, blocks, background);
    } else if (kind == "explicit") {
        f.c = as_matrix(member(j, "flows", "matrix"), "flows.matrix");
    } else {
        throw ValidationError("flows.kind: unknown kind '" + kind + "'");
    }
    if (f.c.rows() != n || f.c.cols() != n)
        throw ValidationError("flows: matrix must be N x N (N = number of banks)");
    if (j.contains("modulation")) f.modulation = parse_modulation(j["modulation"]);
    const auto violations = validate_flows(f);
    if (!violations.empty()) {
        const auto& v = violations.front();
        throw ValidationError("flows: " + v.message + " at (" + std::to_string(v.i) + ", " +
                              std::to_string(v.j) + ")");
    }
    return f;
}

inline SimulationConfig parse_simulation(const json& j, std::size_t n) {
    check_keys(j, "simulation",
               {"T", "n_steps", "n_paths", "y0", "y0_scalar", "default_threshold", "base_seed"});
    SimulationConfig c;
    if (j.contains("T")) c.horizon = as_double(j["T"], "simulation.T");
    if (j.contains("n_steps")) c.n_steps = as_count(j["n_steps"], "simulation.n_steps");
    if (j.contains("n_paths")) c.n_paths = as_count(j["n_paths"], "simulation.n_paths");
    if (j.contains("y0") && j.contains("y0_scalar"))
        throw ValidationError("simulation: give y0 or y0_scalar, not both");
    if (j.contains("y0")) {
        c.y0 = as_vector(j["y0"], "simulation.y0");
    } else {
        const double v = j.contains("y0_scalar") ? as_double(j["y0_scalar"], "simulation.y0_scalar") : 0.0;
        c.y0.assign(n, v);
    }
    if (j.contains("default_threshold"))
        c.default_threshold = as_double(j["default_threshold"], "simulation.default_threshold");
    if (j.contains("base_seed")) c.base_seed = as_u64(j["base_seed"], "simulation.base_seed");
    return c;
}

inline RateSpec parse_rate(const json& j) {
    check_keys(j, "rate", {"fixed", "lambda"});
    if (j.contains("fixed") == j.contains("lambda"))
        throw ValidationError("rate: give exactly one of 'fixed' or 'lambda'");
    RateSpec r = j.contains("fixed") ? RateSpec::fixed(as_double(j["fixed"], "rate.fixed"))
                                     : RateSpec::policy(as_double(j["lambda"], "rate.lambda"));
    r.validate();
    return r;
}

} // namespace detail_json

/// Parses and fully validates a scenario document. Unknown keys are rejected
/// with the offending key named; no partially validated scenario is returned.
inline Scenario parse_scenario_text(std::string_view text, std::string source_label) {
    namespace dj = detail_json;
    dj::json doc;
    try {
        doc = dj::json::parse(text);
    } catch (const dj::json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t i = 0; i < std::min(e.byte, text.size()); ++i)
            if (text[i] == '\n') ++line;
        throw ValidationError(source_label + ": malformed JSON at line " + std::to_string(line) +
                              ": " + e.what());
    }
    if (!doc.is_object()) throw ValidationError(source_label + ": top level must be an object");
    dj::check_keys(doc, "scenario", {"banks", "correlation", "flows", "simulation", "rate"});

    Scenario s;
    s.params = dj::parse_banks(dj::member(doc, "scenario", "banks"));
    const std::size_t n = s.params.size();
    s.corr = doc.contains("correlation") ? dj::parse_correlation(doc["correlation"], n)
                                         : CorrelationStructure::independent();
    s.flows = doc.contains("flows") ? dj::parse_flows(doc["flows"], n) : zero_flows(n);
    s.config = doc.contains("simulation") ? dj::parse_simulation(doc["simulation"], n)
                                          : detail_json::parse_simulation(dj::json::object(), n);
    if (doc.contains("rate")) s.config.rate = dj::parse_rate(doc["rate"]);
    s.config.validate(n);

    s.provenance.source = std::move(source_label);
    s.provenance.content_hash = fnv1a(text);
    return s;
}

inline Scenario parse_scenario(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ValidationError("scenario file not found: " + path.string());
    return parse_scenario_text(read_file(path), path.string());
}

} // namespace sysrisk
