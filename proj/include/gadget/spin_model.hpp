#pragma once

// Two-spin gadget: transverse-field Ising dimer driven by a two-segment
// annealing schedule. Energies are in GHz; the 2*pi factor for time
// evolution is applied by the propagator, never here.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "gadget/types.hpp"

namespace gadget {

class SpinParams {
public:
    // Validated construction; throws DomainError when an ordering constraint fails.
    SpinParams(double h1z, double h2z, double h1x, double h2x, double J, double s1, double dmin1)
        : h1z_(h1z), h2z_(h2z), h1x_(h1x), h2x_(h2x), J_(J), s1_(s1), dmin1_(dmin1) {
        validate();
    }

    static SpinParams defaults() { return SpinParams(0.5, 2.0, 0.05, 1.0, 0.7, 0.5, 0.06); }

    double h1z() const { return h1z_; }
    double h2z() const { return h2z_; }
    double h1x() const { return h1x_; }
    double h2x() const { return h2x_; }
    double J() const { return J_; }
    double s1() const { return s1_; }
    double dmin1() const { return dmin1_; }

    // gamma_d1 at s = s1.
    double gd1_at_s1() const { return dmin1_ / (2.0 * h1x_); }

private:
    void validate() const {
        auto fail = [](const char* what) { throw DomainError(std::string("SpinParams: ") + what); };
        if (!(h1z_ > 0.0 && h1z_ < h2z_)) fail("requires 0 < h1z < h2z");
        if (!(h1z_ < J_ && J_ < h2z_)) fail("requires h1z < J < h2z");
        if (!(h1x_ > 0.0 && h1x_ < h2x_)) fail("requires 0 < h1x < h2x");
        if (!(s1_ > 0.0 && s1_ < 1.0)) fail("requires 0 < s1 < 1");
        if (!(dmin1_ > 0.0 && dmin1_ < 2.0 * h1x_)) fail("requires 0 < dmin1 < 2*h1x");
    }

    double h1z_, h2z_, h1x_, h2x_, J_, s1_, dmin1_;
};

struct ScheduleValues {
    double s;
    double gd1;
    double gd2;
    double gp;
};

inline void require_unit_interval(double s) {
    if (!(s >= 0.0 && s <= 1.0)) {
        std::ostringstream os;
        os << "reduced time s=" << s << " outside [0,1]";
        throw DomainError(os.str());
    }
}

inline ScheduleValues schedule_eval(const SpinParams& p, double s) {
    require_unit_interval(s);
    const double r = p.gd1_at_s1();
    const double s1 = p.s1();
    if (s <= s1) return {s, (r - 1.0) * s / s1 + 1.0, 1.0, 0.0};
    return {s, r * (s - 1.0) / (s1 - 1.0), (s - 1.0) / (s1 - 1.0), (s - s1) / (1.0 - s1)};
}

namespace detail {

// Spin 1 is the left tensor factor; sigma_z |0> = +|0>. Basis index = 2*q1 + q2.
inline Mat4 x1() {
    Mat4 m = Mat4::Zero();
    m(0, 2) = m(2, 0) = m(1, 3) = m(3, 1) = 1.0;
    return m;
}
inline Mat4 x2() {
    Mat4 m = Mat4::Zero();
    m(0, 1) = m(1, 0) = m(2, 3) = m(3, 2) = 1.0;
    return m;
}
inline Vec4 z1() { return Vec4(1, 1, -1, -1); }
inline Vec4 z2() { return Vec4(1, -1, 1, -1); }

}  // namespace detail

// Diagonal of the problem Hamiltonian h1z Z1 + h2z Z2 + J Z1Z2.
inline Vec4 problem_diagonal(const SpinParams& p) {
    return p.h1z() * detail::z1() + p.h2z() * detail::z2() + p.J() * detail::z1().cwiseProduct(detail::z2());
}

// Assemble H from explicit schedule values. The coefficient on sigma_x of spin 1
// is passed separately so callers can switch the spin-1 drive off.
inline Mat4 hamiltonian_from(const SpinParams& p, const ScheduleValues& g, double spin1_drive_scale = 1.0) {
    Mat4 h = (spin1_drive_scale * g.gd1 * p.h1x()) * detail::x1() + (g.gd2 * p.h2x()) * detail::x2();
    h.diagonal() += g.gp * problem_diagonal(p);
    return h;
}

inline Mat4 hamiltonian(const SpinParams& p, double s) { return hamiltonian_from(p, schedule_eval(p, s)); }

inline Vec4 eigenvalues(const Mat4& h) {
    Eigen::SelfAdjointEigenSolver<Mat4> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double gap_exact(const SpinParams& p, double s) {
    const Vec4 e = eigenvalues(hamiltonian(p, s));
    return std::max(0.0, e(1) - e(0));
}

// Gap in the absence of the spin-1 transverse field. Defined on (s1, 1] only.
inline double gap_tilde(const SpinParams& p, double s) {
    require_unit_interval(s);
    if (s <= p.s1()) throw DomainError("gap_tilde is defined for s in (s1, 1]");
    const auto g = schedule_eval(p, s);
    const double bx = g.gd2 * p.h2x();
    return std::hypot(g.gp * (p.h2z() + p.J()), bx) - std::hypot(g.gp * (p.h2z() - p.J()), bx) -
           2.0 * g.gp * p.h1z();
}

inline double gap_approx(const SpinParams& p, double s) {
    const double dt = gap_tilde(p, s);
    const double d1 = 2.0 * schedule_eval(p, s).gd1 * p.h1x();
    return std::hypot(dt, d1);
}

struct GapSample {
    double s;
    double exact;
    double approx;
    double tilde;
};

struct GapReport {
    double s_star;
    double gap_min2;
    std::vector<GapSample> gap_curve;
};

// Bisection root of gap_tilde on (s1, 1]. The bracket is located by a uniform scan
// of `scan_points` points; the first sign change is refined to |gap_tilde| < tol.
inline GapReport find_s_star(const SpinParams& p, int scan_points = 10000, double tol = 1e-12,
                             const std::vector<double>& curve_grid = {}) {
    const double lo0 = p.s1();
    const double h = (1.0 - lo0) / scan_points;
    double a = 0.0, b = 0.0;
    bool found = false;
    double prev_s = lo0 + 1e-3 * h;
    double prev_v = gap_tilde(p, prev_s);
    for (int k = 1; k <= scan_points && !found; ++k) {
        const double s = (k == scan_points) ? 1.0 : lo0 + k * h;
        const double v = gap_tilde(p, s);
        if (prev_v == 0.0) {
            a = b = prev_s;
            found = true;
        } else if ((prev_v < 0.0) != (v < 0.0) || v == 0.0) {
            a = prev_s;
            b = s;
            found = true;
        }
        prev_s = s;
        prev_v = v;
    }
    if (!found) {
        std::ostringstream os;
        os << "gap_tilde has no sign change on (" << lo0 << ", 1]";
        throw ConvergenceError(os.str());
    }
    double fa = gap_tilde(p, a);
    double mid = 0.5 * (a + b);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (a + b);
        const double fm = gap_tilde(p, mid);
        if (std::abs(fm) < tol || b - a < 1e-16) break;
        if ((fm < 0.0) == (fa < 0.0)) {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    GapReport rep{mid, gap_approx(p, mid), {}};
    for (double s : curve_grid) {
        if (s <= p.s1()) continue;
        rep.gap_curve.push_back({s, gap_exact(p, s), gap_approx(p, s), gap_tilde(p, s)});
    }
    return rep;
}

struct LevelRow {
    double s;
    Vec4 levels;
};

inline std::vector<LevelRow> spectrum_trace(const SpinParams& p, const std::vector<double>& s_grid) {
    if (!std::is_sorted(s_grid.begin(), s_grid.end())) throw DomainError("s_grid must be sorted");
    std::vector<LevelRow> out;
    out.reserve(s_grid.size());
    for (double s : s_grid) out.push_back({s, eigenvalues(hamiltonian(p, s))});
    return out;
}

inline std::vector<double> uniform_grid(double a, double b, int n) {
    std::vector<double> g;
    if (n <= 0) return g;
    if (n == 1) return {a};
    g.reserve(n);
    for (int k = 0; k < n; ++k) g.push_back(k == n - 1 ? b : a + (b - a) * k / (n - 1));
    return g;
}

}  // namespace gadget
