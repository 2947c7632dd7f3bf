#pragma once

// Run configuration: flat sectioned key-value text.
//
//   # comment            (also after a value: key = 1.0  # note)
//   [section]
//   key = value
//
// Sections and keys are fixed; anything unknown, duplicated, or unparsable is an
// error. Every section is optional in the file; a subcommand states which ones it
// needs with require().

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gadget/circuit.hpp"
#include "gadget/gate.hpp"
#include "gadget/spin_model.hpp"

namespace gadget {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SpinBlock {
    double h1z = 0.5, h2z = 2.0, h1x = 0.05, h2x = 1.0, J = 0.7, s1 = 0.5, dmin1 = 0.06;
    SpinParams params() const { return SpinParams(h1z, h2z, h1x, h2x, J, s1, dmin1); }
};

struct WaveformBlock {
    double s_min = 0.654281, t_ramp = 19.076436, t_hold = 1.847128;
    GateWaveform waveform() const { return {s_min, t_ramp, t_hold}; }
};

struct SweepBlock {
    int s_points = 201;
    double tf_min = 5.0, tf_max = 500.0;
    int tf_points = 100;
    double spin1_drive = 1.0;
    int trace_samples = 201;
    int translate_samples = 200;
};

struct OptimizerBlock {
    double t_f = 40.0;
    int restarts = 8;
    int grid_s = 20;
    int grid_ramp = 10;
    double search_dt = 0.02;
    int max_evaluations = 300;
};

struct RunConfig {
    SpinBlock spin;
    WaveformBlock waveform;
    CircuitParams circuit;
    SweepBlock sweep;
    OptimizerBlock optimizer;
    std::string out = "out";
    std::uint64_t seed = 1;
    std::set<std::string> present;

    void require(std::initializer_list<const char*> sections) const {
        for (const char* s : sections)
            if (!present.count(s)) throw ConfigError(std::string("missing section [") + s + "]");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& v, const std::string& where) {
    T out{};
    const char* first = v.data();
    const char* last = v.data() + v.size();
    if (!v.empty() && v[0] == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last || first == last) throw ConfigError(where + ": cannot parse '" + v + "'");
    return out;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    auto real = [](double& dst) -> Setter {
        return [&dst](const std::string& v, const std::string& w) { dst = detail::parse_number<double>(v, w); };
    };
    auto integer = [](int& dst) -> Setter {
        return [&dst](const std::string& v, const std::string& w) { dst = detail::parse_number<int>(v, w); };
    };
    std::map<std::string, std::map<std::string, Setter>> keys;
    auto& sp = cfg.spin;
    keys["spin"] = {{"h1z", real(sp.h1z)}, {"h2z", real(sp.h2z)}, {"h1x", real(sp.h1x)}, {"h2x", real(sp.h2x)},
                    {"J", real(sp.J)},     {"s1", real(sp.s1)},   {"dmin1", real(sp.dmin1)}};
    auto& wf = cfg.waveform;
    keys["waveform"] = {{"s_min", real(wf.s_min)}, {"t_ramp", real(wf.t_ramp)}, {"t_hold", real(wf.t_hold)}};
    auto& cp = cfg.circuit;
    keys["circuit"] = {{"EC1", real(cp.qubit[0].EC)}, {"EL1", real(cp.qubit[0].EL)}, {"EJ1", real(cp.qubit[0].EJ)},
                       {"EC2", real(cp.qubit[1].EC)}, {"EL2", real(cp.qubit[1].EL)}, {"EJ2", real(cp.qubit[1].EJ)},
                       {"N", integer(cp.N)},          {"m0", real(cp.coupler.m0)},  {"beta", real(cp.coupler.beta)},
                       {"fx_max", real(cp.fx_max)}};
    auto& sw = cfg.sweep;
    keys["sweep"] = {{"s_points", integer(sw.s_points)},
                     {"tf_min", real(sw.tf_min)},
                     {"tf_max", real(sw.tf_max)},
                     {"tf_points", integer(sw.tf_points)},
                     {"spin1_drive", real(sw.spin1_drive)},
                     {"trace_samples", integer(sw.trace_samples)},
                     {"translate_samples", integer(sw.translate_samples)}};
    auto& op = cfg.optimizer;
    keys["optimizer"] = {{"t_f", real(op.t_f)},
                         {"restarts", integer(op.restarts)},
                         {"grid_s", integer(op.grid_s)},
                         {"grid_ramp", integer(op.grid_ramp)},
                         {"search_dt", real(op.search_dt)},
                         {"max_evaluations", integer(op.max_evaluations)}};
    keys["run"] = {{"out", [&](const std::string& v, const std::string&) { cfg.out = v; }},
                   {"seed", [&](const std::string& v, const std::string& w) {
                        cfg.seed = detail::parse_number<std::uint64_t>(v, w);
                    }}};

    std::string line, section;
    std::set<std::string> seen;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = "line " + std::to_string(lineno);
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + ": malformed section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (!keys.count(section)) throw ConfigError(where + ": unknown section [" + section + "]");
            if (cfg.present.count(section)) throw ConfigError(where + ": duplicate section [" + section + "]");
            cfg.present.insert(section);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
        if (section.empty()) throw ConfigError(where + ": key outside any section");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        auto& table = keys[section];
        const auto it = table.find(key);
        if (it == table.end()) throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
        if (!seen.insert(section + "." + key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
        if (value.empty()) throw ConfigError(where + ": empty value for '" + key + "'");
        it->second(value, where + " (" + key + ")");
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(f);
}

}  // namespace gadget
