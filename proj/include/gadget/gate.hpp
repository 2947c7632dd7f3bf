#pragma once

// Entangling gate from an excursion toward the second anticrossing.
//
// Gate basis. The computational frame used for every gate-level matrix orders the
// four spin states so that the first two share the spin-2 ground label:
//
//     gate index   spin state |q1 q2>   role
//         0            |0 1>            control = 0, target = 0
//         1            |1 1>            control = 0, target = 1
//         2            |0 0>            control = 1, target = 0
//         3            |1 0>            control = 1, target = 1
//
// so control = NOT q2 (spin 2, most significant) and target = q1 (spin 1). At s = 1
// states 0 and 1 are the two lowest levels, and the gate rotates the target only
// when the control is 0 (spin 2 in its ground state).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gadget/dynamics.hpp"
#include "gadget/nelder_mead.hpp"
#include "gadget/spin_model.hpp"
#include "gadget/types.hpp"

namespace gadget {

inline constexpr std::array<int, 4> kGateToSpin = {1, 3, 0, 2};

inline Mat4c spin_to_gate_basis(const Mat4c& u) {
    Mat4c g;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) g(i, j) = u(kGateToSpin[i], kGateToSpin[j]);
    return g;
}

inline Vec4c spin_to_gate_basis(const Vec4c& v) {
    Vec4c g;
    for (int i = 0; i < 4; ++i) g(i) = v(kGateToSpin[i]);
    return g;
}

// The regular form reached after waveform calibration.
inline Mat4c target_gate() {
    Mat4c t = Mat4c::Zero();
    t(0, 1) = t(1, 0) = kI;
    t(2, 2) = t(3, 3) = -1.0;
    return t;
}

inline Mat4c cnot_gate() {
    Mat4c c = Mat4c::Zero();
    c(0, 0) = c(1, 1) = 1.0;
    c(2, 3) = c(3, 2) = 1.0;
    return c;
}

// ---------------------------------------------------------------------------
// Flattop-cosine excursion in s.

struct GateWaveform {
    double s_min = 1.0;
    double t_ramp = 0.0;  // ns
    double t_hold = 0.0;  // ns

    double t_f() const { return 2.0 * t_ramp + t_hold; }

    void validate() const {
        if (!(s_min >= 0.0 && s_min <= 1.0)) throw DomainError("waveform s_min outside [0,1]");
        if (!(t_ramp >= 0.0 && t_hold >= 0.0)) throw DomainError("waveform durations must be non-negative");
        if (t_ramp == 0.0 && t_hold > 0.0 && s_min != 1.0)
            throw DomainError("waveform with a hold and no ramp is discontinuous");
    }
};

inline double waveform_eval(const GateWaveform& w, double t) {
    const double tf = w.t_f();
    const double slack = 1e-12 * std::max(1.0, tf);
    if (!(t >= -slack && t <= tf + slack)) {
        std::ostringstream os;
        os << "waveform time t=" << t << " outside [0, " << tf << "]";
        throw DomainError(os.str());
    }
    const double u = std::clamp(std::min(t, tf - t), 0.0, tf);
    if (u >= w.t_ramp) return w.s_min;
    return 1.0 - (1.0 - w.s_min) * 0.5 * (1.0 - std::cos(kPi * u / w.t_ramp));
}

inline TimePath waveform_path(const GateWaveform& w) {
    return {w.t_f(), [w](double t) { return waveform_eval(w, t); }};
}

// ---------------------------------------------------------------------------
// Fidelity and the canonical-form parameters.

inline void require_unitary(const Mat4c& u, const char* what) {
    if (unitarity_error(u) >= 1e-6) throw DomainError(std::string(what) + " is not unitary");
}

// Average gate fidelity (|Tr(U^dagger V)|^2 + d) / (d (d + 1)) with d = 4.
inline double fidelity(const Mat4c& u, const Mat4c& v) {
    require_unitary(u, "fidelity: first argument");
    require_unitary(v, "fidelity: second argument");
    return (std::norm((u.adjoint() * v).trace()) + 4.0) / 20.0;
}

inline double process_fidelity(const Mat4c& u, const Mat4c& v) {
    require_unitary(u, "process_fidelity: first argument");
    require_unitary(v, "process_fidelity: second argument");
    return std::norm((u.adjoint() * v).trace()) / 16.0;
}

struct CanonicalGateForm {
    double eta = 0.0;
    double theta = 0.0;
    double nu1 = 0.0;
    double nu2 = 0.0;
    double phi1 = 0.0;
    double phi2 = 0.0;
    double leakage = 0.0;
};

inline bool in_canonical_pattern(int i, int j) { return (i < 2 && j < 2) || i == j; }

// Parameters are read in place; the global phase stays inside nu/theta/phi, matching
// the written form. Leakage is the Frobenius norm of all entries outside the pattern.
inline CanonicalGateForm canonical_fit(const Mat4c& u) {
    CanonicalGateForm c;
    auto arg = [](cplx z) { return std::abs(z) == 0.0 ? 0.0 : wrap_angle(std::arg(z)); };
    c.eta = std::atan2(std::abs(u(0, 1)) + std::abs(u(1, 0)), std::abs(u(0, 0)) + std::abs(u(1, 1)));
    c.theta = arg(u(0, 1) + u(1, 0));
    c.nu1 = arg(u(0, 0));
    c.nu2 = arg(u(1, 1));
    c.phi1 = arg(u(2, 2));
    c.phi2 = arg(u(3, 3));
    double l2 = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            if (!in_canonical_pattern(i, j)) l2 += std::norm(u(i, j));
    c.leakage = std::sqrt(l2);
    return c;
}

inline Mat4c canonical_matrix(const CanonicalGateForm& c) {
    Mat4c m = Mat4c::Zero();
    m(0, 0) = std::cos(c.eta) * std::polar(1.0, c.nu1);
    m(1, 1) = std::cos(c.eta) * std::polar(1.0, c.nu2);
    m(0, 1) = m(1, 0) = std::sin(c.eta) * std::polar(1.0, c.theta);
    m(2, 2) = std::polar(1.0, c.phi1);
    m(3, 3) = std::polar(1.0, c.phi2);
    return m;
}

// ---------------------------------------------------------------------------
// Phase frames.

struct GateFrame {
    bool dynamical = true;   // idle phases of H(1) removed
    double z_control = 0.0;  // virtual-Z angle on the control, applied before and after
    double z_target = 0.0;   // same for the target
    double global_phase = 0.0;
};

// diag(exp(+i 2 pi E_k t_f)) in the gate basis, E_k the diagonal of H(1).
inline Vec4c idle_phase_frame(const SpinParams& p, double t_f) {
    const Vec4 e = problem_diagonal(p);
    Vec4c f;
    for (int i = 0; i < 4; ++i) f(i) = std::polar(1.0, kTwoPi * e(kGateToSpin[i]) * t_f);
    return f;
}

inline Vec4c virtual_z_diagonal(double z_control, double z_target) {
    static constexpr double zc[4] = {1, 1, -1, -1};
    static constexpr double zt[4] = {1, -1, 1, -1};
    Vec4c d;
    for (int i = 0; i < 4; ++i) d(i) = std::polar(1.0, -0.5 * (z_control * zc[i] + z_target * zt[i]));
    return d;
}

inline Mat4c apply_virtual_z(const Mat4c& u, double z_control, double z_target) {
    const Vec4c d = virtual_z_diagonal(z_control, z_target);
    return d.asDiagonal() * u * d.asDiagonal();
}

inline Mat4c apply_frame(const Mat4c& raw, const GateFrame& f, const Vec4c& idle) {
    Mat4c u = f.dynamical ? Mat4c(idle.asDiagonal() * raw) : raw;
    return std::polar(1.0, f.global_phase) * apply_virtual_z(u, f.z_control, f.z_target);
}

struct FrameFit {
    double z_control;
    double z_target;
    double abs_trace;
};

// Virtual-Z angles maximizing |Tr(target^dagger D U D)|: coarse grid, then simplex.
inline FrameFit fit_virtual_z(const Mat4c& u, const Mat4c& target) {
    const Mat4c ta = target.adjoint();
    auto score = [&](double a, double b) {
        const Vec4c d = virtual_z_diagonal(a, b);
        cplx tr = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) tr += ta(j, i) * d(i) * u(i, j) * d(j);
        return std::abs(tr);
    };
    constexpr int kGrid = 16;
    double best = -1.0, ba = 0.0, bb = 0.0;
    for (int i = 0; i < kGrid; ++i)
        for (int j = 0; j < kGrid; ++j) {
            const double a = -kPi + kTwoPi * i / kGrid, b = -kPi + kTwoPi * j / kGrid;
            const double v = score(a, b);
            if (v > best) {
                best = v;
                ba = a;
                bb = b;
            }
        }
    const double h = kTwoPi / kGrid;
    auto r = nelder_mead([&](const std::vector<double>& x) { return -score(x[0], x[1]); }, {ba, bb}, {0.5 * h, 0.5 * h},
                         {300, 1e-15, 1e-10});
    if (-r.value > best) return {wrap_angle(r.x[0]), wrap_angle(r.x[1]), -r.value};
    return {ba, bb, best};
}

// Best frame over {idle phases removed, lab frame} x virtual-Z angles; global phase
// makes Tr(target^dagger U) real and positive.
inline GateFrame calibrate_frame(const Mat4c& raw, const Vec4c& idle, const Mat4c& target) {
    GateFrame best{};
    double best_score = -1.0;
    for (bool dyn : {true, false}) {
        const Mat4c u = dyn ? Mat4c(idle.asDiagonal() * raw) : raw;
        const FrameFit fit = fit_virtual_z(u, target);
        if (fit.abs_trace > best_score + 1e-15) {
            best_score = fit.abs_trace;
            const cplx tr = (target.adjoint() * apply_virtual_z(u, fit.z_control, fit.z_target)).trace();
            best = {dyn, fit.z_control, fit.z_target, std::abs(tr) > 0.0 ? -std::arg(tr) : 0.0};
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Gate extraction.

struct GateReport {
    GateWaveform waveform;
    Mat4c raw_unitary;     // lab frame, gate basis
    Mat4c framed_unitary;  // after frame calibration
    GateFrame frame;
    CanonicalGateForm canonical;
    double fidelity = 0.0;          // average gate fidelity to target_gate()
    double process_fidelity = 0.0;  // to target_gate()
    long steps = 0;
    double error_estimate = 0.0;
};

// Fixed step count when steps > 0, otherwise step doubling to opt.tolerance.
inline GateReport gate_unitary(const SpinParams& p, const GateWaveform& w, const PropagationOptions& opt = {},
                               long fixed_steps = 0) {
    w.validate();
    const TimePath path = waveform_path(w);
    const auto h_of_t = spin_hamiltonian_of_time(p, path);
    GateReport rep;
    rep.waveform = w;
    Mat4c u_spin;
    if (fixed_steps > 0) {
        u_spin = evolve_fixed(h_of_t, w.t_f(), fixed_steps);
        rep.steps = fixed_steps;
    } else {
        const auto r = propagate_unitary_with(h_of_t, w.t_f(), opt);
        u_spin = r.unitary;
        rep.steps = r.steps;
        rep.error_estimate = r.error_estimate;
    }
    rep.raw_unitary = spin_to_gate_basis(u_spin);
    const Vec4c idle = idle_phase_frame(p, w.t_f());
    const Mat4c target = target_gate();
    rep.frame = calibrate_frame(rep.raw_unitary, idle, target);
    rep.framed_unitary = apply_frame(rep.raw_unitary, rep.frame, idle);
    rep.canonical = canonical_fit(rep.framed_unitary);
    rep.fidelity = fidelity(rep.framed_unitary, target);
    rep.process_fidelity = process_fidelity(rep.framed_unitary, target);
    return rep;
}

// ---------------------------------------------------------------------------
// Waveform optimization.

struct OptimizeOptions {
    std::uint64_t seed = 1;
    int restarts = 8;
    int grid_s = 20;          // coarse s_min samples
    int grid_ramp = 10;       // coarse t_ramp samples
    double search_dt = 0.02;  // ns, fixed step during the search
    int max_evaluations = 300;
};

struct OptimizationResult {
    GateWaveform waveform;
    GateReport report;
    int best_restart = -1;
    double search_fidelity = 0.0;
};

namespace detail {

// Portable uniform [0,1) from the raw 64-bit engine output.
inline double unit_uniform(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

}  // namespace detail

// Maximizes fidelity to `target` over (s_min, t_ramp) with t_hold = t_f - 2 t_ramp.
// A coarse grid ranks start points; each restart jitters one of the best grid
// points with the seeded generator and runs a simplex search. The winner is the
// highest fidelity, ties going to the lower restart index.
inline OptimizationResult optimize_waveform(const SpinParams& p, double t_f, const OptimizeOptions& opt = {},
                                            const PropagationOptions& final_opt = {}) {
    if (!(t_f > 0.0)) throw DomainError("gate time budget must be positive");
    const double s_lo = p.s1() + 1e-3, s_hi = 1.0;
    const double r_lo = std::min(0.05, 0.5 * t_f), r_hi = 0.5 * t_f;
    const long steps = std::max(64L, static_cast<long>(std::ceil(t_f / opt.search_dt)));

    auto make = [&](double s_min, double t_ramp) {
        s_min = std::clamp(s_min, s_lo, s_hi);
        t_ramp = std::clamp(t_ramp, r_lo, r_hi);
        return GateWaveform{s_min, t_ramp, std::max(0.0, t_f - 2.0 * t_ramp)};
    };
    auto objective = [&](double s_min, double t_ramp) {
        return gate_unitary(p, make(s_min, t_ramp), {}, steps).fidelity;
    };

    struct Start {
        double f, s, r;
    };
    std::vector<Start> grid;
    const double ds = (s_hi - s_lo) / opt.grid_s, dr = (r_hi - r_lo) / opt.grid_ramp;
    for (int i = 0; i < opt.grid_s; ++i)
        for (int j = 0; j < opt.grid_ramp; ++j) {
            const double s = s_lo + (i + 0.5) * ds, r = r_lo + (j + 0.5) * dr;
            grid.push_back({objective(s, r), s, r});
        }
    std::stable_sort(grid.begin(), grid.end(), [](const Start& a, const Start& b) { return a.f > b.f; });

    std::mt19937_64 gen(opt.seed);
    OptimizationResult best;
    double best_f = -1.0;
    for (int k = 0; k < opt.restarts; ++k) {
        const Start& st = grid[static_cast<std::size_t>(k) % grid.size()];
        const double s0 = st.s + (detail::unit_uniform(gen) - 0.5) * ds;
        const double r0 = st.r + (detail::unit_uniform(gen) - 0.5) * dr;
        auto res = nelder_mead(
            [&](const std::vector<double>& x) {
                // Out-of-box points are evaluated at the clamp, plus a penalty that
                // keeps the simplex from drifting along the boundary.
                const double pen = std::pow(std::max(0.0, s_lo - x[0]) + std::max(0.0, x[0] - s_hi), 2) +
                                   std::pow((std::max(0.0, r_lo - x[1]) + std::max(0.0, x[1] - r_hi)) / t_f, 2);
                return -objective(x[0], x[1]) + pen;
            },
            {s0, r0}, {0.5 * ds, 0.5 * dr}, {opt.max_evaluations, 1e-13, 1e-9});
        const GateWaveform w = make(res.x[0], res.x[1]);
        const double f = objective(w.s_min, w.t_ramp);
        if (f > best_f) {
            best_f = f;
            best.waveform = w;
            best.best_restart = k;
            best.search_fidelity = f;
        }
    }
    best.report = gate_unitary(p, best.waveform, final_opt);
    return best;
}

// ---------------------------------------------------------------------------
// Local-equivalence certificate.

struct MakhlinInvariants {
    cplx g1;
    double g2;
};

inline MakhlinInvariants makhlin_invariants(const Mat4c& u) {
    const double r = 1.0 / std::sqrt(2.0);
    Mat4c q;
    q << 1, 0, 0, kI, 0, kI, 1, 0, 0, kI, -1, 0, 1, 0, 0, -kI;
    q *= r;
    const Mat4c ub = q.adjoint() * u * q;
    const Mat4c m = ub.transpose() * ub;
    const cplx det = u.determinant();
    const cplx tr = m.trace();
    const cplx g1 = tr * tr / (16.0 * det);
    const cplx g2 = (tr * tr - (m * m).trace()) / (4.0 * det);
    return {g1, g2.real()};
}

// ---------------------------------------------------------------------------
// Single-qubit dressing to CNOT.

struct Dressing {
    std::string label;
    Mat2c op;
};

// Phase gate {I, S, S^dagger, Z} times a rotation {I, R_{x,y,z}(+-pi/2), R_{x,y,z}(pi)}.
inline const std::vector<Dressing>& dressing_family() {
    static const std::vector<Dressing> family = [] {
        std::vector<Dressing> rot{{"I", pauli::I()}};
        const char axes[3] = {'x', 'y', 'z'};
        for (int a = 0; a < 3; ++a) {
            const Mat2c sig = pauli::by_index(a + 1);
            for (double ang : {kPi / 2, -kPi / 2, kPi}) {
                const Mat2c r = std::cos(ang / 2) * pauli::I() - kI * std::sin(ang / 2) * sig;
                std::string name = std::string("R") + axes[a] + (ang == kPi ? "(pi)" : ang > 0 ? "(pi/2)" : "(-pi/2)");
                rot.push_back({name, r});
            }
        }
        Mat2c s = Mat2c::Identity();
        s(1, 1) = kI;
        std::vector<Dressing> phase{{"", pauli::I()}, {"S.", s}, {"Sdg.", s.adjoint()}, {"Z.", pauli::Z()}};
        std::vector<Dressing> out;
        for (const auto& ph : phase)
            for (const auto& r : rot) out.push_back({ph.label + r.label, ph.op * r.op});
        return out;
    }();
    return family;
}

struct CnotComposition {
    Mat4c composed;
    double fidelity = 0.0;  // average gate fidelity to cnot_gate()
    std::string left_control, left_target, right_control, right_target;
};

// Exhaustive search of (L_c (x) L_t) U (R_c (x) R_t) over the dressing family,
// maximizing fidelity to CNOT; ties keep the first combination in enumeration order.
inline CnotComposition best_cnot_dressing(const Mat4c& u) {
    const auto& fam = dressing_family();
    const std::size_t n = fam.size();
    std::vector<Mat4c> right(n * n), left(n * n);
    const Mat4c cd = cnot_gate().adjoint();
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            const Mat4c k = kron2(fam[a].op, fam[b].op);
            right[a * n + b] = u * k;
            left[a * n + b] = cd * k;
        }
    double best = -1.0;
    std::size_t bl = 0, br = 0;
    for (std::size_t l = 0; l < left.size(); ++l) {
        const Mat4c& lm = left[l];
        for (std::size_t r = 0; r < right.size(); ++r) {
            const Mat4c& rm = right[r];
            cplx tr = 0.0;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) tr += lm(i, j) * rm(j, i);
            const double v = std::norm(tr);
            if (v > best + 1e-12) {
                best = v;
                bl = l;
                br = r;
            }
        }
    }
    CnotComposition c;
    c.composed = kron2(fam[bl / n].op, fam[bl % n].op) * u * kron2(fam[br / n].op, fam[br % n].op);
    c.fidelity = fidelity(c.composed, cnot_gate());
    c.left_control = fam[bl / n].label;
    c.left_target = fam[bl % n].label;
    c.right_control = fam[br / n].label;
    c.right_target = fam[br % n].label;
    return c;
}

inline CnotComposition compose_cnot(const GateReport& report) {
    if (report.canonical.leakage >= 0.05) throw DomainError("compose_cnot: gate leaves the canonical pattern");
    return best_cnot_dressing(report.framed_unitary);
}

// ---------------------------------------------------------------------------
// Process matrix in the two-qubit Pauli basis.

inline std::string pauli_label(int m) { return {pauli::kLabels[m / 4], pauli::kLabels[m % 4]}; }

// chi_mn with E(rho) = sum_mn chi_mn P_m rho P_n^dagger for rho -> U rho U^dagger,
// P_m = sigma_(m/4) (x) sigma_(m%4). Trace one for unitary U.
inline Eigen::Matrix<cplx, 16, 16> qpt(const Mat4c& u) {
    Eigen::Matrix<cplx, 16, 1> c;
    for (int m = 0; m < 16; ++m) c(m) = (kron2(pauli::by_index(m / 4), pauli::by_index(m % 4)) * u).trace() / 4.0;
    return c * c.adjoint();
}

// ---------------------------------------------------------------------------
// Levels and populations along the gate, from one computational state.

inline std::vector<TraceRow> gate_level_trace(const SpinParams& p, const GateWaveform& w, int gate_index, int samples,
                                              const PropagationOptions& opt = {}) {
    if (gate_index < 0 || gate_index > 3) throw DomainError("gate basis index must be in 0..3");
    w.validate();
    Vec4c psi = Vec4c::Zero();
    psi(kGateToSpin[gate_index]) = 1.0;
    if (w.t_f() == 0.0) {
        const Eigenbasis b = eigenbasis(hamiltonian(p, w.s_min));
        return {TraceRow{0.0, w.s_min, b.energies, (b.vectors.transpose().cast<cplx>() * psi).cwiseAbs2()}};
    }
    return population_trace(p, waveform_path(w), psi, samples, opt);
}

}  // namespace gadget
