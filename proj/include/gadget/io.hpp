#pragma once

// Text artifacts: CSV tables and key=value reports. Numbers are written with 17
// significant digits in scientific form so reruns compare byte for byte.

#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "gadget/circuit.hpp"
#include "gadget/gate.hpp"

namespace gadget::io {

inline std::string num(double v) { return fmt::format("{:.16e}", v); }

class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) {
        for (std::size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + header[i];
        text_ += '\n';
    }
    Csv& row(const std::vector<double>& values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) text_ += ',';
            text_ += num(values[i]);
        }
        text_ += '\n';
        return *this;
    }
    Csv& footer(const std::string& key, double value) {
        text_ += key + "=" + num(value) + "\n";
        return *this;
    }
    const std::string& str() const { return text_; }

private:
    std::string text_;
};

class KeyValue {
public:
    KeyValue& add(const std::string& key, double v) { return raw(key, num(v)); }
    KeyValue& add(const std::string& key, long v) { return raw(key, std::to_string(v)); }
    KeyValue& add(const std::string& key, int v) { return raw(key, std::to_string(v)); }
    KeyValue& add(const std::string& key, const std::string& v) { return raw(key, v); }
    KeyValue& add(const std::string& key, const char* v) { return raw(key, v); }
    KeyValue& add(const std::string& key, bool v) { return raw(key, v ? "true" : "false"); }
    KeyValue& raw(const std::string& key, const std::string& v) {
        text_ += key + "=" + v + "\n";
        return *this;
    }
    const std::string& str() const { return text_; }

private:
    std::string text_;
};

// Row-major list of real and imaginary parts: re00,im00,re01,im01,...
inline std::string matrix_entries(const Mat4c& u) {
    std::string s;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            if (i || j) s += ',';
            s += num(u(i, j).real()) + "," + num(u(i, j).imag());
        }
    return s;
}

inline KeyValue gate_report_text(const GateReport& r) {
    KeyValue kv;
    kv.add("s_min", r.waveform.s_min)
        .add("t_ramp", r.waveform.t_ramp)
        .add("t_hold", r.waveform.t_hold)
        .add("t_f", r.waveform.t_f())
        .add("fidelity", r.fidelity)
        .add("process_fidelity", r.process_fidelity)
        .add("eta", r.canonical.eta)
        .add("theta", r.canonical.theta)
        .add("nu1", r.canonical.nu1)
        .add("nu2", r.canonical.nu2)
        .add("phi1", r.canonical.phi1)
        .add("phi2", r.canonical.phi2)
        .add("leakage", r.canonical.leakage)
        .add("frame_dynamical", r.frame.dynamical)
        .add("frame_z_control", r.frame.z_control)
        .add("frame_z_target", r.frame.z_target)
        .add("frame_global_phase", r.frame.global_phase)
        .add("steps", r.steps)
        .add("error_estimate", r.error_estimate)
        .add("raw_unitary", matrix_entries(r.raw_unitary))
        .add("framed_unitary", matrix_entries(r.framed_unitary));
    return kv;
}

// Files staged in memory and written only when the whole set is ready; each goes
// to a temporary name first and is renamed into place.
class Artifacts {
public:
    explicit Artifacts(std::filesystem::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

    std::vector<std::filesystem::path> commit() const {
        std::filesystem::create_directories(dir_);
        std::vector<std::filesystem::path> written;
        for (const auto& [name, content] : files_) {
            const auto final_path = dir_ / name;
            const auto tmp = dir_ / (name + ".tmp");
            {
                std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
                if (!f) throw std::runtime_error("cannot write " + tmp.string());
                f << content;
                if (!f) throw std::runtime_error("write failed for " + tmp.string());
            }
            std::filesystem::rename(tmp, final_path);
            written.push_back(final_path);
        }
        return written;
    }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace gadget::io
