#pragma once

// Schroedinger propagation along a reduced-time path s(t).
//
// The integrator is the exponential midpoint rule
//     U_step = exp(-i 2 pi H(s(t_mid)) dt),
// exact for piecewise-constant H and unitary to rounding. The step count is
// doubled until the propagated result moves by less than the tolerance.

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <utility>
#include <vector>

#include "gadget/spin_model.hpp"
#include "gadget/types.hpp"

namespace gadget {

// t in ns -> s in [0,1], over [0, t_f].
struct TimePath {
    double t_f = 0.0;
    std::function<double(double)> s_of_t;

    double operator()(double t) const { return s_of_t(t); }

    static TimePath linear_anneal(double t_f) {
        return {t_f, [t_f](double t) { return t_f > 0.0 ? std::clamp(t / t_f, 0.0, 1.0) : 1.0; }};
    }
    static TimePath constant(double s, double t_f) {
        return {t_f, [s](double) { return s; }};
    }
    // Piecewise-linear interpolation of (t, s) samples sorted by t.
    static TimePath sampled(std::vector<std::pair<double, double>> samples) {
        if (samples.size() < 2) throw DomainError("sampled path needs at least two samples");
        const double tf = samples.back().first;
        return {tf, [pts = std::move(samples)](double t) {
                    auto it = std::lower_bound(pts.begin(), pts.end(), t,
                                               [](const auto& a, double v) { return a.first < v; });
                    if (it == pts.begin()) return pts.front().second;
                    if (it == pts.end()) return pts.back().second;
                    auto prev = std::prev(it);
                    const double w = (t - prev->first) / (it->first - prev->first);
                    return prev->second + w * (it->second - prev->second);
                }};
    }
};

struct PropagationOptions {
    double tolerance = 1e-8;   // max change of the result under step halving
    long initial_steps = 256;
    long max_steps = 1L << 24;  // refinement floor on dt = t_f / max_steps
};

struct PropagationResult {
    Vec4c state;
    Mat4c unitary;
    long steps = 0;
    double error_estimate = 0.0;
};

// exp(-i 2 pi H dt) for real symmetric H.
inline Mat4c step_exponential(const Mat4& h, double dt) {
    Eigen::SelfAdjointEigenSolver<Mat4> es(h);
    const Mat4& v = es.eigenvectors();
    Vec4c ph;
    for (int k = 0; k < 4; ++k) ph(k) = std::polar(1.0, -kTwoPi * es.eigenvalues()(k) * dt);
    return v.cast<cplx>() * ph.asDiagonal() * v.transpose().cast<cplx>();
}

// Applies successive step exponentials. Neighbouring steps have nearly equal H, so
// the eigenvectors of the previous step seed a cyclic Jacobi iteration that usually
// converges in one or two sweeps; the basis is re-orthonormalized every step so
// rounding does not accumulate into a loss of unitarity. The eigenbasis is real, so
// states are carried as [Re | Im] column blocks and multiplied with real products.
class MidpointStepper {
public:
    template <int Cols>
    using Split = Eigen::Matrix<double, 4, 2 * Cols>;

    template <int Cols>
    void apply(const Mat4& h, double dt, Split<Cols>& x) {
        diagonalize(h);
        Vec4 c, s;
        for (int k = 0; k < 4; ++k) {
            c(k) = std::cos(kTwoPi * w_(k) * dt);
            s(k) = std::sin(kTwoPi * w_(k) * dt);
        }
        const Split<Cols> y = v_.transpose() * x;
        Split<Cols> z;
        z.template leftCols<Cols>() = c.asDiagonal() * y.template leftCols<Cols>() + s.asDiagonal() * y.template rightCols<Cols>();
        z.template rightCols<Cols>() = c.asDiagonal() * y.template rightCols<Cols>() - s.asDiagonal() * y.template leftCols<Cols>();
        x.noalias() = v_ * z;
    }

    template <int Cols>
    static Split<Cols> split(const Eigen::Matrix<cplx, 4, Cols>& m) {
        Split<Cols> x;
        x << m.real(), m.imag();
        return x;
    }
    template <int Cols>
    static Eigen::Matrix<cplx, 4, Cols> join(const Split<Cols>& x) {
        Eigen::Matrix<cplx, 4, Cols> m;
        m.real() = x.template leftCols<Cols>();
        m.imag() = x.template rightCols<Cols>();
        return m;
    }

private:
    void diagonalize(const Mat4& h) {
        Mat4 a = v_.transpose() * h * v_;
        const double scale = a.squaredNorm();
        bool done = false;
        for (int sweep = 0; sweep < 12; ++sweep) {
            double off = 0.0;
            for (int p = 0; p < 3; ++p)
                for (int q = p + 1; q < 4; ++q) off += a(p, q) * a(p, q);
            if (off <= 1e-30 * scale) {
                done = true;
                break;
            }
            for (int p = 0; p < 3; ++p)
                for (int q = p + 1; q < 4; ++q) {
                    if (a(p, q) * a(p, q) <= 1e-32 * scale) continue;
                    Eigen::JacobiRotation<double> j;
                    j.makeJacobi(a, p, q);
                    a.applyOnTheLeft(p, q, j.adjoint());
                    a.applyOnTheRight(p, q, j);
                    v_.applyOnTheRight(p, q, j);
                }
        }
        if (!done) {
            Eigen::SelfAdjointEigenSolver<Mat4> es(h);
            v_ = es.eigenvectors();
            w_ = es.eigenvalues();
            return;
        }
        w_ = a.diagonal();
        for (int k = 0; k < 4; ++k) {
            for (int j = 0; j < k; ++j) v_.col(k) -= v_.col(j).dot(v_.col(k)) * v_.col(j);
            v_.col(k).normalize();
        }
    }

    Mat4 v_ = Mat4::Identity();
    Vec4 w_ = Vec4::Zero();
};

// Fixed-step midpoint product over [0, t_f]; h_of_t maps time (ns) to H (GHz).
template <typename HamOfTime>
Mat4c evolve_fixed(const HamOfTime& h_of_t, double t_f, long steps) {
    if (t_f <= 0.0 || steps <= 0) return Mat4c::Identity();
    const double dt = t_f / static_cast<double>(steps);
    MidpointStepper stepper;
    auto u = MidpointStepper::split<4>(Mat4c::Identity());
    for (long k = 0; k < steps; ++k) stepper.apply<4>(h_of_t((k + 0.5) * dt), dt, u);
    return MidpointStepper::join<4>(u);
}

// Step-doubling driver. `measure(U_coarse, U_fine)` is the convergence metric.
template <typename HamOfTime, typename Metric>
std::pair<Mat4c, std::pair<long, double>> evolve_converged(const HamOfTime& h_of_t, double t_f,
                                                           const PropagationOptions& opt, Metric measure) {
    if (t_f <= 0.0) return {Mat4c::Identity(), {0, 0.0}};
    long n = std::max(1L, opt.initial_steps);
    Mat4c coarse = evolve_fixed(h_of_t, t_f, n);
    while (true) {
        if (2 * n > opt.max_steps) {
            std::ostringstream os;
            os << "propagation did not converge to " << opt.tolerance << " within " << opt.max_steps << " steps";
            throw ConvergenceError(os.str());
        }
        Mat4c fine = evolve_fixed(h_of_t, t_f, 2 * n);
        const double diff = measure(coarse, fine);
        n *= 2;
        // Second order: the finer result carries about a third of the observed change.
        if (diff < opt.tolerance) return {fine, {n, diff / 3.0}};
        coarse = std::move(fine);
    }
}

inline double max_column_change(const Mat4c& a, const Mat4c& b) { return (a - b).colwise().norm().maxCoeff(); }

template <typename HamOfTime>
PropagationResult propagate_with(const HamOfTime& h_of_t, double t_f, const Vec4c& initial,
                                 const PropagationOptions& opt = {}) {
    if (std::abs(initial.norm() - 1.0) > 1e-10) throw DomainError("initial state is not normalized");
    auto [u, info] = evolve_converged(h_of_t, t_f, opt,
                                      [&](const Mat4c& a, const Mat4c& b) { return ((a - b) * initial).norm(); });
    return {u * initial, u, info.first, info.second};
}

// Unitary over all four basis states; convergence judged on the worst column.
template <typename HamOfTime>
PropagationResult propagate_unitary_with(const HamOfTime& h_of_t, double t_f, const PropagationOptions& opt = {}) {
    auto [u, info] = evolve_converged(h_of_t, t_f, opt, max_column_change);
    return {u.col(0), u, info.first, info.second};
}

inline auto spin_hamiltonian_of_time(const SpinParams& p, const TimePath& path, double spin1_drive = 1.0) {
    return [&p, &path, spin1_drive](double t) { return hamiltonian_from(p, schedule_eval(p, path(t)), spin1_drive); };
}

inline PropagationResult propagate(const SpinParams& p, const TimePath& path, const Vec4c& initial,
                                   const PropagationOptions& opt = {}) {
    return propagate_with(spin_hamiltonian_of_time(p, path), path.t_f, initial, opt);
}

// ---------------------------------------------------------------------------
// Instantaneous eigenbasis with a fixed phase gauge.

struct Eigenbasis {
    Vec4 energies;
    Mat4 vectors;  // columns, ascending energy
    bool near_degenerate = false;
};

inline int gauge_index(const Eigen::Ref<const Vec4>& v) {
    const double m = v.cwiseAbs().maxCoeff();
    for (int i = 0; i < 4; ++i)
        if (std::abs(v(i)) >= m - 1e-12) return i;
    return 0;
}

// Eigenvectors sorted by energy; each has its largest-magnitude component real and
// positive (first such index on ties). Pairs split by less than 1e-12 are flagged
// and ordered by their gauge component index.
inline Eigenbasis eigenbasis(const Mat4& h) {
    Eigen::SelfAdjointEigenSolver<Mat4> es(h);
    Eigenbasis b{es.eigenvalues(), es.eigenvectors(), false};
    for (int k = 0; k < 4; ++k) {
        const int g = gauge_index(b.vectors.col(k));
        if (b.vectors(g, k) < 0.0) b.vectors.col(k) *= -1.0;
    }
    for (int k = 0; k + 1 < 4; ++k) {
        if (b.energies(k + 1) - b.energies(k) < 1e-12) {
            b.near_degenerate = true;
            if (gauge_index(b.vectors.col(k + 1)) < gauge_index(b.vectors.col(k))) {
                b.vectors.col(k).swap(b.vectors.col(k + 1));
                std::swap(b.energies(k), b.energies(k + 1));
            }
        }
    }
    return b;
}

inline Eigenbasis instantaneous_basis(const SpinParams& p, double s) { return eigenbasis(hamiltonian(p, s)); }

// ---------------------------------------------------------------------------
// Total-anneal-time sweep.

struct SweepPoint {
    double t_f;
    double p0;
};

// Linear anneal from the ground state of H(0); P0 is the overlap with the ground
// state of H(1). spin1_drive scales the spin-1 transverse term (1 = the model as given).
inline std::vector<SweepPoint> ground_population_sweep(const SpinParams& p, const std::vector<double>& t_f_list,
                                                       const PropagationOptions& opt = {},
                                                       double spin1_drive = 1.0) {
    const Vec4c psi0 = eigenbasis(hamiltonian_from(p, schedule_eval(p, 0.0), spin1_drive)).vectors.col(0).cast<cplx>();
    const Vec4c gs1 = eigenbasis(hamiltonian_from(p, schedule_eval(p, 1.0), spin1_drive)).vectors.col(0).cast<cplx>();
    std::vector<SweepPoint> out;
    out.reserve(t_f_list.size());
    for (double tf : t_f_list) {
        if (!(tf > 0.0)) throw DomainError("anneal times must be positive");
        const TimePath path = TimePath::linear_anneal(tf);
        const auto r = propagate_with(spin_hamiltonian_of_time(p, path, spin1_drive), tf, psi0, opt);
        out.push_back({tf, std::norm(gs1.dot(r.state))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sampled trajectory in the instantaneous eigenbasis.

struct TraceRow {
    double t;
    double s;
    Vec4 energies;
    Vec4 populations;
};

// Records `samples` equally spaced rows over [0, t_f]. The step is the converged
// step of a propagate() call, rounded down to a divisor of the sampling interval.
template <typename HamOfTime>
std::vector<TraceRow> population_trace_with(const HamOfTime& h_of_t, const TimePath& path, const Vec4c& initial,
                                            int samples, const PropagationOptions& opt = {}) {
    if (samples < 2) throw DomainError("trace needs at least two samples");
    const auto conv = propagate_with(h_of_t, path.t_f, initial, opt);
    const long per_interval = std::max(1L, (conv.steps + samples - 2) / (samples - 1));
    const double interval = path.t_f / (samples - 1);
    const double dt = interval / per_interval;
    std::vector<TraceRow> rows;
    rows.reserve(samples);
    Vec4c psi = initial;
    auto record = [&](double t) {
        const Eigenbasis b = eigenbasis(h_of_t(t));
        const Vec4 pop = (b.vectors.transpose().cast<cplx>() * psi).cwiseAbs2();
        rows.push_back({t, path(t), b.energies, pop});
    };
    record(0.0);
    MidpointStepper stepper;
    auto x = MidpointStepper::split<1>(psi);
    for (int k = 1; k < samples; ++k) {
        const double t0 = (k - 1) * interval;
        for (long j = 0; j < per_interval; ++j) stepper.apply<1>(h_of_t(t0 + (j + 0.5) * dt), dt, x);
        psi = MidpointStepper::join<1>(x);
        record(k * interval);
    }
    return rows;
}

inline std::vector<TraceRow> population_trace(const SpinParams& p, const TimePath& path, const Vec4c& initial,
                                              int samples, const PropagationOptions& opt = {}) {
    return population_trace_with(spin_hamiltonian_of_time(p, path), path, initial, samples, opt);
}

}  // namespace gadget
