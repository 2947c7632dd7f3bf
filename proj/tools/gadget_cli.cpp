// Command-line front end: one subcommand per pipeline stage, each driven by a
// config file and writing CSV / key=value artifacts into the output directory.
//
// Exit codes: 0 success, 2 configuration error, 3 domain or convergence error,
// 4 translation target not reachable.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "gadget/circuit.hpp"
#include "gadget/config.hpp"
#include "gadget/dynamics.hpp"
#include "gadget/gate.hpp"
#include "gadget/io.hpp"
#include "gadget/spin_model.hpp"

using namespace gadget;

namespace {

std::vector<double> s_grid(const RunConfig& c) {
    if (c.sweep.s_points < 1) throw DomainError("s grid is empty");
    return uniform_grid(0.0, 1.0, c.sweep.s_points);
}

void cmd_schedule(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "sweep"});
    const SpinParams p = c.spin.params();
    io::Csv csv({"s", "gd1", "gd2", "gp"});
    for (double s : s_grid(c)) {
        const auto g = schedule_eval(p, s);
        csv.row({s, g.gd1, g.gd2, g.gp});
    }
    out.add("schedule.csv", csv.str());
}

void cmd_levels(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "sweep"});
    const SpinParams p = c.spin.params();
    io::Csv csv({"s", "E0", "E1", "E2", "E3"});
    for (const auto& row : spectrum_trace(p, s_grid(c)))
        csv.row({row.s, row.levels(0), row.levels(1), row.levels(2), row.levels(3)});
    out.add("levels.csv", csv.str());
}

void cmd_gaps(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "sweep"});
    const SpinParams p = c.spin.params();
    const auto rep = find_s_star(p, 10000, 1e-12, s_grid(c));
    if (rep.gap_curve.empty()) throw DomainError("s grid has no points above s1");
    io::Csv csv({"s", "gap_exact", "gap_approx", "gap_tilde"});
    for (const auto& g : rep.gap_curve) csv.row({g.s, g.exact, g.approx, g.tilde});
    csv.footer("s_star", rep.s_star);
    out.add("gaps.csv", csv.str());
}

void cmd_oscillation(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "sweep"});
    const SpinParams p = c.spin.params();
    if (c.sweep.tf_points < 1) throw DomainError("anneal-time grid is empty");
    const auto tfs = uniform_grid(c.sweep.tf_min, c.sweep.tf_max, c.sweep.tf_points);
    io::Csv csv({"t_f", "P0"});
    for (const auto& pt : ground_population_sweep(p, tfs, {}, c.sweep.spin1_drive)) csv.row({pt.t_f, pt.p0});
    out.add("oscillation.csv", csv.str());
}

void add_gate_traces(const SpinParams& p, const GateWaveform& w, int samples, io::Artifacts& out) {
    io::Csv wave({"t", "s"});
    for (double t : uniform_grid(0.0, w.t_f(), samples)) wave.row({t, waveform_eval(w, t)});
    out.add("waveform.csv", wave.str());
    for (int k = 0; k < 4; ++k) {
        io::Csv csv({"t", "E0", "E1", "E2", "E3", "P0", "P1", "P2", "P3"});
        for (const auto& r : gate_level_trace(p, w, k, samples))
            csv.row({r.t, r.energies(0), r.energies(1), r.energies(2), r.energies(3), r.populations(0),
                     r.populations(1), r.populations(2), r.populations(3)});
        out.add(fmt::format("gate_trace_{}.csv", k), csv.str());
    }
}

void cmd_gate(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "waveform"});
    const SpinParams p = c.spin.params();
    const GateWaveform w = c.waveform.waveform();
    const GateReport rep = gate_unitary(p, w);
    out.add("gate_report.txt", io::gate_report_text(rep).str());
    add_gate_traces(p, w, c.sweep.trace_samples, out);
}

void cmd_gate_opt(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "optimizer"});
    const SpinParams p = c.spin.params();
    OptimizeOptions opt;
    opt.seed = c.seed;
    opt.restarts = c.optimizer.restarts;
    opt.grid_s = c.optimizer.grid_s;
    opt.grid_ramp = c.optimizer.grid_ramp;
    opt.search_dt = c.optimizer.search_dt;
    opt.max_evaluations = c.optimizer.max_evaluations;
    const auto res = optimize_waveform(p, c.optimizer.t_f, opt);
    io::KeyValue kv = io::gate_report_text(res.report);
    kv.add("seed", std::to_string(c.seed)).add("best_restart", res.best_restart).add("search_fidelity", res.search_fidelity);
    out.add("gate_opt_report.txt", kv.str());
    add_gate_traces(p, res.waveform, c.sweep.trace_samples, out);
}

void cmd_qpt(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "waveform"});
    const GateReport rep = gate_unitary(c.spin.params(), c.waveform.waveform());
    const CnotComposition cn = compose_cnot(rep);
    const auto chi = qpt(cn.composed);
    const auto ideal = qpt(cnot_gate());
    std::vector<std::string> header;
    for (int m = 0; m < 16; ++m) header.push_back(pauli_label(m));
    io::Csv re(header), im(header);
    for (int i = 0; i < 16; ++i) {
        std::vector<double> a, b;
        for (int j = 0; j < 16; ++j) {
            a.push_back(chi(i, j).real());
            b.push_back(chi(i, j).imag());
        }
        re.row(a);
        im.row(b);
    }
    out.add("qpt_real.csv", re.str());
    out.add("qpt_imag.csv", im.str());
    io::KeyValue kv;
    kv.add("gate_fidelity", rep.fidelity)
        .add("cnot_fidelity", cn.fidelity)
        .add("cnot_process_fidelity", (ideal * chi).trace().real())
        .add("left_control", cn.left_control)
        .add("left_target", cn.left_target)
        .add("right_control", cn.right_control)
        .add("right_target", cn.right_target)
        .add("composed_unitary", io::matrix_entries(cn.composed));
    out.add("qpt_report.txt", kv.str());
}

struct Translation {
    std::vector<double> times;
    std::vector<IsingPoint> targets;
    InversionResult inversion;
};

Translation translate(const RunConfig& c, const CircuitModel& model) {
    const SpinParams p = c.spin.params();
    const GateWaveform w = c.waveform.waveform();
    w.validate();
    if (c.sweep.translate_samples < 1) throw DomainError("translation needs at least one sample");
    Translation t;
    t.times = sample_times(w.t_f(), c.sweep.translate_samples);
    for (double time : t.times) t.targets.push_back(ising_point(p, waveform_eval(w, time)));
    t.inversion = invert_schedule(model, t.targets);
    return t;
}

void cmd_translate(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "waveform", "circuit", "sweep"});
    const CircuitModel model(c.circuit);
    const Translation t = translate(c, model);
    io::Csv flux({"t", "fx1", "fx2", "fz1", "fz2", "fc"});
    io::Csv ising({"t", "hx1", "hx2", "hz1", "hz2", "Jzz"});
    for (std::size_t k = 0; k < t.times.size(); ++k) {
        const auto& f = t.inversion.fluxes[k];
        const auto& g = t.targets[k];
        flux.row({t.times[k], f.fx1, f.fx2, f.fz1, f.fz2, f.fc});
        ising.row({t.times[k], g.hx1, g.hx2, g.hz1, g.hz2, g.Jzz});
    }
    const double err = roundtrip_check(model, t.inversion.fluxes, t.targets);
    flux.footer("roundtrip_error", err);
    out.add("flux_schedule.csv", flux.str());
    out.add("ising_schedule.csv", ising.str());
    io::KeyValue kv;
    kv.add("samples", static_cast<int>(t.times.size()))
        .add("roundtrip_error", err)
        .add("flux_roughness", flux_roughness(t.inversion.fluxes))
        .add("target_roughness", ising_roughness(t.targets));
    out.add("translate_report.txt", kv.str());
}

void cmd_circuit_levels(const RunConfig& c, io::Artifacts& out) {
    c.require({"spin", "waveform", "circuit", "sweep"});
    const CircuitModel model(c.circuit);
    const Translation t = translate(c, model);
    io::Csv csv({"t", "E0", "E1", "E2", "E3"});
    for (const auto& row : circuit_levels(model, t.times, t.inversion.fluxes))
        csv.row({row.t, row.levels(0), row.levels(1), row.levels(2), row.levels(3)});
    out.add("circuit_levels.csv", csv.str());
    // Spin-model levels along the same samples, for side-by-side plots.
    const SpinParams p = c.spin.params();
    const GateWaveform w = c.waveform.waveform();
    io::Csv spin({"t", "E0", "E1", "E2", "E3"});
    for (double time : t.times) {
        const Vec4 e = eigenvalues(hamiltonian(p, waveform_eval(w, time)));
        spin.row({time, e(0), e(1), e(2), e(3)});
    }
    out.add("spin_levels.csv", spin.str());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-spin gadget gate and flux-circuit translation"};
    app.require_subcommand(1);
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    app.add_option("--config", config_path, "Configuration file")->required();
    app.add_option("--out", out_dir, "Output directory (overrides [run] out)");
    app.add_option("--seed", seed, "Optimizer seed (overrides [run] seed)");
    app.fallthrough();

    using Command = std::function<void(const RunConfig&, io::Artifacts&)>;
    const std::vector<std::pair<std::string, std::pair<std::string, Command>>> commands = {
        {"schedule", {"Schedule coefficients over s", cmd_schedule}},
        {"levels", {"Four instantaneous levels over s", cmd_levels}},
        {"gaps", {"Exact and approximate gap above s1, with s_star", cmd_gaps}},
        {"oscillation", {"Final ground-state population versus anneal time", cmd_oscillation}},
        {"gate", {"Gate unitary, report and traces for the configured waveform", cmd_gate}},
        {"gate-opt", {"Optimize the waveform and report the gate", cmd_gate_opt}},
        {"qpt", {"Process matrix of the CNOT-dressed gate", cmd_qpt}},
        {"translate", {"Flux schedule realizing the gate's Ising schedule", cmd_translate}},
        {"circuit-levels", {"Circuit levels along the translated schedule", cmd_circuit_levels}},
    };
    std::map<CLI::App*, Command> handlers;
    for (const auto& [name, entry] : commands) handlers[app.add_subcommand(name, entry.first)] = entry.second;

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (!out_dir.empty()) cfg.out = out_dir;
        if (seed) cfg.seed = *seed;
        io::Artifacts artifacts(cfg.out);
        for (const auto& [sub, handler] : handlers)
            if (sub->parsed()) handler(cfg, artifacts);
        for (const auto& path : artifacts.commit()) std::cout << path.string() << '\n';
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InversionError& e) {
        std::cerr << "unreachable target: " << e.what() << '\n';
        return 4;
    } catch (const DomainError& e) {
        std::cerr << "domain error: " << e.what() << '\n';
        return 3;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
