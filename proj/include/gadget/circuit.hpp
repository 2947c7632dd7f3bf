#pragma once

// Flux-qubit circuit stand-in for the spin model.
//
// Each qubit is a single-mode loop with a tunable junction,
//     H = 4 EC n^2 + EL phi^2 / 2 + 2 EJ |cos(pi fx)| cos(phi - 2 pi fz),
// written in the oscillator basis of the (EC, EL) mode. fz is measured from the
// degeneracy point, so fz = 0 is a symmetric double well. The persistent-current
// operator is Ip = dH/d(2 pi fz) = 2 EJ |cos(pi fx)| sin(phi - 2 pi fz).
//
// Two qubits couple through M_eff(fc) Ip1 (x) Ip2. The four lowest product levels
// are reduced to an effective Hamiltonian by a block-diagonalizing (Schrieffer-Wolff)
// transformation and read off in the Pauli basis of each qubit's current states.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gadget/dynamics.hpp"
#include "gadget/spin_model.hpp"
#include "gadget/types.hpp"

namespace gadget {

struct QubitCircuit {
    double EC = 5.0;    // GHz
    double EL = 300.0;  // GHz
    double EJ = 500.0;  // GHz
};

// M_eff(fc) = m0 * beta cos(2 pi fc) / (1 + beta cos(2 pi fc)): the rf-SQUID coupler
// with its own mode eliminated adiabatically. Zero at fc = 1/4, monotone on [0, 1/2].
struct CouplerCurve {
    double m0 = 1.5e-5;  // 1/GHz, sets the ZZ scale against Ip^2
    double beta = 0.5;   // screening parameter, 0 < beta < 1

    static constexpr double off_point = 0.25;

    double operator()(double fc) const {
        const double c = beta * std::cos(kTwoPi * fc);
        return m0 * c / (1.0 + c);
    }
    double min_coupling() const { return -m0 * beta / (1.0 - beta); }
    double max_coupling() const { return m0 * beta / (1.0 + beta); }

    double inverse(double m) const {
        if (m == 0.0) return off_point;
        if (!(m >= min_coupling() && m <= max_coupling())) throw DomainError("coupling outside the coupler range");
        const double c = std::clamp(m / (beta * (m0 - m)), -1.0, 1.0);
        return std::acos(c) / kTwoPi;
    }
};

struct CircuitParams {
    std::array<QubitCircuit, 2> qubit{};
    CouplerCurve coupler{};
    int N = 34;
    // Top of the x-flux control window. The splitting is flat at fx = 1, so the
    // window stops short of it on a slope; the splitting there (~7e-4 GHz with the
    // default energies) is the smallest transverse field the circuit realizes.
    double fx_max = 0.775;

    void validate() const {
        for (const auto& q : qubit)
            if (!(q.EC > 0.0 && q.EL > 0.0 && q.EJ > 0.0)) throw DomainError("circuit energies must be positive");
        if (N < 15) throw DomainError("oscillator truncation N must be at least 15");
        if (!(coupler.m0 > 0.0)) throw DomainError("coupler m0 must be positive");
        if (!(coupler.beta > 0.0 && coupler.beta < 1.0)) throw DomainError("coupler beta must lie in (0,1)");
        if (!(fx_max > 0.5 && fx_max <= 1.0)) throw DomainError("fx_max must lie in (0.5, 1]");
    }
};

struct FluxWindow {
    static constexpr double fx_lo = 0.5, fx_hi = 1.0;
    static constexpr double fz_lo = -0.05, fz_hi = 0.05;
    static constexpr double fc_lo = 0.0, fc_hi = 0.5;
};

struct FluxPoint {
    double fx1 = 0.75, fx2 = 0.75;
    double fz1 = 0.0, fz2 = 0.0;
    double fc = CouplerCurve::off_point;

    void validate(double fx_max = FluxWindow::fx_hi) const {
        auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
        if (!in(fx1, FluxWindow::fx_lo, fx_max) || !in(fx2, FluxWindow::fx_lo, fx_max)) {
            std::ostringstream os;
            os << "fx outside [0.5, " << fx_max << "]";
            throw DomainError(os.str());
        }
        if (!in(fz1, FluxWindow::fz_lo, FluxWindow::fz_hi) || !in(fz2, FluxWindow::fz_lo, FluxWindow::fz_hi))
            throw DomainError("fz outside [-0.05, 0.05]");
        if (!in(fc, FluxWindow::fc_lo, FluxWindow::fc_hi)) throw DomainError("fc outside [0, 0.5]");
    }
};

struct IsingPoint {
    double hx1 = 0.0, hx2 = 0.0;
    double hz1 = 0.0, hz2 = 0.0;
    double Jzz = 0.0;
    double residual = 0.0;

    std::array<double, 5> coefficients() const { return {hx1, hx2, hz1, hz2, Jzz}; }
};

// Spin-model coefficients at reduced time s.
inline IsingPoint ising_point(const SpinParams& p, double s) {
    const auto g = schedule_eval(p, s);
    return {g.gd1 * p.h1x(), g.gd2 * p.h2x(), g.gp * p.h1z(), g.gp * p.h2z(), g.gp * p.J(), 0.0};
}

// `samples` equally spaced points of a path over [0, t_f].
inline std::vector<double> sample_times(double t_f, int samples) { return uniform_grid(0.0, t_f, samples); }

inline std::vector<IsingPoint> ising_schedule(const SpinParams& p, const TimePath& path, int samples) {
    std::vector<IsingPoint> out;
    for (double t : sample_times(path.t_f, samples)) out.push_back(ising_point(p, path(t)));
    return out;
}

// ---------------------------------------------------------------------------
// Single-qubit operators.

// <m| exp(i phz (a + a^dagger)) |n>; complex symmetric.
inline MatXc displacement_matrix(int n, double phz) {
    MatXc d(n, n);
    const double x = phz * phz;
    for (int m = 0; m < n; ++m)
        for (int k = 0; k <= m; ++k) {
            const int dk = m - k;
            const double mag = std::exp(0.5 * (std::lgamma(k + 1.0) - std::lgamma(m + 1.0)) - 0.5 * x) *
                               std::pow(phz, dk) * std::assoc_laguerre(k, dk, x);
            // i^dk
            static constexpr cplx ipow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
            d(m, k) = d(k, m) = mag * ipow[dk % 4];
        }
    return d;
}

struct QubitOperators {
    MatX H;   // GHz
    MatX Ip;  // GHz per radian of 2 pi fz
};

// Precomputed oscillator-basis pieces for one qubit at truncation N.
class QubitBasis {
public:
    QubitBasis() = default;
    QubitBasis(const QubitCircuit& q, int n) : q_(q), n_(n) {
        omega_ = std::sqrt(8.0 * q.EC * q.EL);
        const MatXc d = displacement_matrix(n, std::pow(2.0 * q.EC / q.EL, 0.25));
        re_ = d.real();
        im_ = d.imag();
    }

    int size() const { return n_; }
    double omega() const { return omega_; }

    QubitOperators operators(double fx, double fz) const {
        const double amp = 2.0 * q_.EJ * std::abs(std::cos(kPi * fx));
        const double c = std::cos(kTwoPi * fz), s = std::sin(kTwoPi * fz);
        // e^{-i theta} D = (c re + s im) + i (c im - s re)
        QubitOperators op{amp * (c * re_ + s * im_), amp * (c * im_ - s * re_)};
        for (int k = 0; k < n_; ++k) op.H(k, k) += omega_ * (k + 0.5);
        return op;
    }

private:
    QubitCircuit q_{};
    int n_ = 0;
    double omega_ = 0.0;
    MatX re_, im_;
};

// Single-qubit eigenbasis with the current operator rotated into it.
struct QubitEigen {
    VecX energies;
    MatX vectors;
    MatX Ip;  // vectors^T Ip vectors
};

inline QubitEigen qubit_eigen(const QubitOperators& op) {
    Eigen::SelfAdjointEigenSolver<MatX> es(op.H);
    QubitEigen e{es.eigenvalues(), es.eigenvectors(), {}};
    // Deterministic sign: largest-magnitude component positive.
    for (int k = 0; k < e.vectors.cols(); ++k) {
        Eigen::Index i;
        e.vectors.col(k).cwiseAbs().maxCoeff(&i);
        if (e.vectors(i, k) < 0.0) e.vectors.col(k) *= -1.0;
    }
    e.Ip = e.vectors.transpose() * op.Ip * e.vectors;
    return e;
}

class CircuitModel {
public:
    explicit CircuitModel(const CircuitParams& cp) : cp_(cp) {
        cp.validate();
        for (int i = 0; i < 2; ++i) {
            basis_[i] = QubitBasis(cp.qubit[i], cp.N);
            doubled_[i] = QubitBasis(cp.qubit[i], 2 * cp.N);
        }
    }

    const CircuitParams& params() const { return cp_; }
    const QubitBasis& basis(int i) const { return basis_.at(i); }
    const QubitBasis& doubled_basis(int i) const { return doubled_.at(i); }

private:
    CircuitParams cp_;
    std::array<QubitBasis, 2> basis_, doubled_;
};

inline void require_qubit_index(int i) {
    if (i != 0 && i != 1) throw DomainError("qubit index must be 0 or 1");
}

// Shift of the lowest two levels when the truncation is doubled.
inline double truncation_shift(const CircuitModel& m, int i, double fx, double fz) {
    require_qubit_index(i);
    const VecX a = qubit_eigen(m.basis(i).operators(fx, fz)).energies;
    const VecX b = qubit_eigen(m.doubled_basis(i).operators(fx, fz)).energies;
    return std::max(std::abs(a(0) - b(0)), std::abs(a(1) - b(1)));
}

inline constexpr double kTruncationTolerance = 1e-8;

// Hamiltonian of qubit i (0 or 1) in the oscillator basis, truncation-checked.
inline MatX qubit_hamiltonian(const CircuitModel& m, int i, double fx, double fz) {
    require_qubit_index(i);
    if (!(fx >= FluxWindow::fx_lo && fx <= FluxWindow::fx_hi && fz >= FluxWindow::fz_lo && fz <= FluxWindow::fz_hi))
        throw DomainError("qubit flux bias outside its window");
    const double shift = truncation_shift(m, i, fx, fz);
    if (!(shift < kTruncationTolerance)) {
        std::ostringstream os;
        os << "oscillator truncation not converged: doubling N moves the lowest levels by " << shift << " GHz";
        throw ConvergenceError(os.str());
    }
    return m.basis(i).operators(fx, fz).H;
}

inline MatX persistent_current(const CircuitModel& m, int i, double fx, double fz) {
    require_qubit_index(i);
    return m.basis(i).operators(fx, fz).Ip;
}

// ---------------------------------------------------------------------------
// Low-energy reduction.

namespace detail {

// Rotation of {g, e} into the current eigenbasis: column 0 carries the larger
// current with a non-negative ground component; column 1 is signed so that the
// transverse coefficient of the bare qubit is non-negative.
inline Eigen::Matrix2d current_frame(const QubitEigen& q) {
    const Eigen::Matrix2d ip = q.Ip.topLeftCorner<2, 2>();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(ip);
    if (!(es.eigenvalues()(1) - es.eigenvalues()(0) > 1e-12 * std::max(1.0, ip.norm())))
        throw DomainError("degenerate current states; qubit anchoring undefined");
    Eigen::Matrix2d r;
    r.col(0) = es.eigenvectors().col(1);
    r.col(1) = es.eigenvectors().col(0);
    if (r(0, 0) < 0.0) r.col(0) *= -1.0;
    // off-diagonal of diag(e0, e1) in the new frame = (e0 - e1) r00 r01 with e0 < e1.
    if (r(0, 0) * r(0, 1) > 0.0) r.col(1) *= -1.0;
    return r;
}

// y = (A (x) B) x for x of length na*nb, index = a*nb + b.
inline VecX kron_apply(const MatX& a, const MatX& b, const VecX& x) {
    const Eigen::Map<const MatX> psi(x.data(), b.rows(), a.rows());  // psi(b, a)
    MatX out = b * psi * a.transpose();
    return Eigen::Map<const VecX>(out.data(), out.size());
}

}  // namespace detail

struct SwOptions {
    double validity_ratio = 10.0;  // required gap-to-manifold / manifold spread
    double tolerance = 1e-13;      // GHz, Riccati fixed-point change
    int max_iterations = 200;
};

struct SwResult {
    Mat4 h_eff;        // product basis {g,e} (x) {g,e}, qubit 1 left
    Mat4 h_current;    // same, rotated into the current basis
    double spread;     // manifold width, GHz
    double gap;        // manifold to the next product level, GHz
    int iterations;
};

// Effective Hamiltonian of the lowest four product levels. X solves the Bloch
// equation Q H (P + X) = X H (P + X) by fixed-point iteration and the hermitian
// effective operator is S^{1/2} (P H P + P V X) S^{-1/2} with S = 1 + X^T X.
inline SwResult schrieffer_wolff(const QubitEigen& q1, const QubitEigen& q2, double coupling,
                                 const SwOptions& opt = {}) {
    const int n1 = static_cast<int>(q1.energies.size()), n2 = static_cast<int>(q2.energies.size());
    const int dim = n1 * n2;
    VecX e(dim);
    for (int a = 0; a < n1; ++a)
        for (int b = 0; b < n2; ++b) e(a * n2 + b) = q1.energies(a) + q2.energies(b);
    const std::array<int, 4> pidx = {0, 1, n2, n2 + 1};
    double pmax = -std::numeric_limits<double>::infinity(), pmin = -pmax;
    for (int k : pidx) {
        pmax = std::max(pmax, e(k));
        pmin = std::min(pmin, e(k));
    }
    std::vector<char> in_p(dim, 0);
    for (int k : pidx) in_p[k] = 1;
    double qmin = std::numeric_limits<double>::infinity();
    for (int k = 0; k < dim; ++k)
        if (!in_p[k]) qmin = std::min(qmin, e(k));
    SwResult res{Mat4::Zero(), Mat4::Zero(), pmax - pmin, qmin - pmax, 0};
    if (!(res.gap > opt.validity_ratio * res.spread)) {
        std::ostringstream os;
        os << "low-energy reduction invalid: gap " << res.gap << " GHz vs manifold spread " << res.spread << " GHz";
        throw DomainError(os.str());
    }

    auto apply_v = [&](const VecX& x) -> VecX { return coupling * detail::kron_apply(q1.Ip, q2.Ip, x); };
    // Columns of V P and the P block.
    MatX vp(dim, 4);
    for (int j = 0; j < 4; ++j) {
        VecX u = VecX::Zero(dim);
        u(pidx[j]) = 1.0;
        vp.col(j) = apply_v(u);
    }
    Mat4 pvp;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) pvp(i, j) = vp(pidx[i], j);

    MatX x = MatX::Zero(dim, 4);  // zero on P rows
    MatX vx(dim, 4);
    Mat4 heff_nh = pvp;
    for (int j = 0; j < 4; ++j) heff_nh(j, j) += e(pidx[j]);
    if (coupling != 0.0) {
        bool converged = false;
        for (int it = 1; it <= opt.max_iterations; ++it) {
            for (int j = 0; j < 4; ++j) vx.col(j) = apply_v(x.col(j));
            Mat4 pvqx;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) pvqx(i, j) = vx(pidx[i], j);
            const Mat4 w = pvp + pvqx;
            const MatX xw = x * w;
            double change = 0.0;
            MatX xn = MatX::Zero(dim, 4);
            for (int q = 0; q < dim; ++q) {
                if (in_p[q]) continue;
                for (int p = 0; p < 4; ++p) {
                    xn(q, p) = (xw(q, p) - vp(q, p) - vx(q, p)) / (e(q) - e(pidx[p]));
                    change = std::max(change, std::abs(xn(q, p) - x(q, p)) * std::abs(e(q) - e(pidx[p])));
                }
            }
            x.swap(xn);
            res.iterations = it;
            if (change < opt.tolerance) {
                converged = true;
                break;
            }
        }
        if (!converged) throw ConvergenceError("low-energy reduction: Bloch iteration did not converge");
        for (int j = 0; j < 4; ++j) vx.col(j) = apply_v(x.col(j));
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) heff_nh(i, j) += vx(pidx[i], j);
    }
    const Mat4 s = Mat4::Identity() + x.transpose() * x;
    Eigen::SelfAdjointEigenSolver<Mat4> ss(s);
    const Mat4 sh = ss.operatorSqrt(), shi = ss.operatorInverseSqrt();
    const Mat4 h = sh * heff_nh * shi;
    res.h_eff = 0.5 * (h + h.transpose());

    const Mat4 r = kron(detail::current_frame(q1), detail::current_frame(q2));
    res.h_current = r.transpose() * res.h_eff * r;
    return res;
}

// Pauli decomposition of a real 4x4 two-qubit Hamiltonian into the Ising set.
inline IsingPoint ising_from_hamiltonian(const Mat4& h) {
    double c[4][4];
    double other = 0.0;
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
            c[a][b] = (kron2(pauli::by_index(a), pauli::by_index(b)) * h.cast<cplx>()).trace().real() / 4.0;
            const bool ising = (a == 0 && b == 0) || (a == 1 && b == 0) || (a == 0 && b == 1) || (a == 3 && b == 0) ||
                               (a == 0 && b == 3) || (a == 3 && b == 3);
            if (!ising) other += c[a][b] * c[a][b];
        }
    return {c[1][0], c[0][1], c[3][0], c[0][3], c[3][3], std::sqrt(other)};
}

inline IsingPoint coefficients_at(const CircuitModel& m, double fx1, double fx2, double fz1, double fz2,
                                  double coupling, const SwOptions& opt = {}) {
    const QubitEigen q1 = qubit_eigen(m.basis(0).operators(fx1, fz1));
    const QubitEigen q2 = qubit_eigen(m.basis(1).operators(fx2, fz2));
    return ising_from_hamiltonian(schrieffer_wolff(q1, q2, coupling, opt).h_current);
}

inline IsingPoint pauli_coefficients(const CircuitModel& m, const FluxPoint& f, const SwOptions& opt = {}) {
    f.validate(m.params().fx_max);
    return coefficients_at(m, f.fx1, f.fx2, f.fz1, f.fz2, m.params().coupler(f.fc), opt);
}

// ---------------------------------------------------------------------------
// Inversion.

struct InversionError : std::runtime_error {
    InversionError(std::size_t index, double best, const std::string& why)
        : std::runtime_error(message(index, best, why)), sample(index), best_residual(best) {}
    std::size_t sample;
    double best_residual;

private:
    static std::string message(std::size_t index, double best, const std::string& why) {
        std::ostringstream os;
        os << "target not reached at sample " << index << " (best residual " << best << " GHz): " << why;
        return os.str();
    }
};

struct InversionOptions {
    double tolerance = 1e-3;     // GHz, max per-coefficient residual accepted
    double target_residual = 1e-9;  // GHz, iteration stops below this
    int max_iterations = 80;
    int table_points = 101;      // fx grid for the seeding table
};

struct InversionResult {
    std::vector<FluxPoint> fluxes;
    std::vector<double> residuals;  // max per-coefficient error per sample
};

namespace detail {

struct SeedTable {
    std::array<std::vector<double>, 2> fx, hx, di;  // di = difference of the two current eigenvalues
};

inline SeedTable seed_table(const CircuitModel& m, int points) {
    SeedTable t;
    for (int i = 0; i < 2; ++i)
        for (double fx : uniform_grid(FluxWindow::fx_lo, m.params().fx_max, points)) {
            const QubitEigen q = qubit_eigen(m.basis(i).operators(fx, 0.0));
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(Eigen::Matrix2d(q.Ip.topLeftCorner<2, 2>()));
            t.fx[i].push_back(fx);
            t.hx[i].push_back(0.5 * (q.energies(1) - q.energies(0)));
            t.di[i].push_back(es.eigenvalues()(1) - es.eigenvalues()(0));
        }
    return t;
}

// Decoupled estimate: fx from the splitting table, fz from the linear bias response
// hz = pi fz (i0 - i1), coupling from Jzz = M (i0 - i1)^2 / 4.
inline std::array<double, 5> seed_guess(const SeedTable& t, const IsingPoint& target) {
    std::array<double, 5> x{};
    const double hx[2] = {target.hx1, target.hx2}, hz[2] = {target.hz1, target.hz2};
    double di[2];
    for (int i = 0; i < 2; ++i) {
        const auto& fx = t.fx[i];
        const auto& h = t.hx[i];
        std::size_t k = 0;
        // Table hx falls with fx; pick the bracketing interval, log-interpolated.
        while (k + 2 < h.size() && h[k + 1] > hx[i]) ++k;
        const double lo = std::log(std::max(h[k], 1e-300)), hi = std::log(std::max(h[k + 1], 1e-300));
        const double w = (hi == lo) ? 0.0 : std::clamp((std::log(std::max(hx[i], 1e-300)) - lo) / (hi - lo), 0.0, 1.0);
        x[i] = fx[k] + w * (fx[k + 1] - fx[k]);
        di[i] = t.di[i][k] + w * (t.di[i][k + 1] - t.di[i][k]);
        x[2 + i] = std::clamp(hz[i] / (kPi * di[i]), FluxWindow::fz_lo, FluxWindow::fz_hi);
    }
    x[4] = 4.0 * target.Jzz / (di[0] * di[1]);
    return x;
}

}  // namespace detail

// Levenberg-Marquardt on the five coefficients over (fx1, fx2, fz1, fz2, M/m0),
// clamped to the flux windows and the coupler range. Evaluation failures (invalid
// reduction) count as rejected steps. Returns the best point found.
struct SolveOutcome {
    std::array<double, 5> x;
    double residual;
};

inline SolveOutcome solve_point(const CircuitModel& m, const IsingPoint& target, std::array<double, 5> x,
                                const InversionOptions& opt) {
    const auto& cc = m.params().coupler;
    const bool coupler_off = target.Jzz == 0.0;
    const int nv = coupler_off ? 4 : 5;
    const std::array<double, 5> lo = {FluxWindow::fx_lo, FluxWindow::fx_lo, FluxWindow::fz_lo, FluxWindow::fz_lo,
                                      cc.min_coupling() / cc.m0};
    const double fx_max = m.params().fx_max;
    const std::array<double, 5> hi = {fx_max, fx_max, FluxWindow::fz_hi, FluxWindow::fz_hi,
                                      cc.max_coupling() / cc.m0};
    if (coupler_off) x[4] = 0.0;
    for (int k = 0; k < 5; ++k) x[k] = std::clamp(x[k], lo[k], hi[k]);
    const auto tgt = target.coefficients();

    using Vec5 = Eigen::Matrix<double, 5, 1>;
    auto residual = [&](const std::array<double, 5>& v, Vec5& r) {
        try {
            const auto c = coefficients_at(m, v[0], v[1], v[2], v[3], v[4] * cc.m0).coefficients();
            for (int k = 0; k < 5; ++k) r(k) = c[k] - tgt[k];
            return true;
        } catch (const DomainError&) {
            return false;
        } catch (const ConvergenceError&) {
            return false;
        }
    };

    Vec5 r;
    if (!residual(x, r)) return {x, std::numeric_limits<double>::infinity()};
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    const std::array<double, 5> h = {1e-7, 1e-7, 1e-8, 1e-8, 1e-6};
    for (int it = 0; it < opt.max_iterations && r.cwiseAbs().maxCoeff() > opt.target_residual; ++it) {
        Eigen::MatrixXd jac(5, nv);
        bool ok = true;
        for (int k = 0; k < nv && ok; ++k) {
            auto xp = x;
            double step = (x[k] + h[k] <= hi[k]) ? h[k] : -h[k];
            xp[k] += step;
            Vec5 rp;
            if (!residual(xp, rp)) {
                step = -step;
                xp[k] = x[k] + step;
                ok = residual(xp, rp);
            }
            jac.col(k) = (rp - r) / step;
        }
        if (!ok) break;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd g = jac.transpose() * r;
        // Variables pinned at a bound with the descent direction pointing outward
        // are held fixed for this step.
        std::vector<char> pinned(nv, 0), weak(nv, 0);
        for (int k = 0; k < nv; ++k)
            pinned[k] = (x[k] <= lo[k] && g(k) > 0.0) || (x[k] >= hi[k] && g(k) < 0.0);
        // Directions that barely move the residual over their whole window (e.g. fx
        // at the top of the splitting curve) get a second candidate step without
        // them, so their poor local model cannot inflate the damping of the others.
        double reach = 0.0;
        for (int k = 0; k < nv; ++k) reach = std::max(reach, jac.col(k).norm() * (hi[k] - lo[k]));
        bool any_weak = false;
        for (int k = 0; k < nv; ++k) {
            weak[k] = pinned[k] || jac.col(k).norm() * (hi[k] - lo[k]) < 1e-3 * reach;
            any_weak = any_weak || (weak[k] && !pinned[k]);
        }

        // Damped step with `held` variables fixed; variables the step drives
        // through a bound are set on it and the rest re-solved.
        auto projected_step = [&](const Eigen::MatrixXd& a, std::vector<char> held) {
            Eigen::VectorXd d = Eigen::VectorXd::Zero(nv);
            for (int pass = 0; pass < nv; ++pass) {
                std::vector<int> idx;
                for (int k = 0; k < nv; ++k)
                    if (!held[k]) idx.push_back(k);
                if (idx.empty()) break;
                Eigen::MatrixXd af(idx.size(), idx.size());
                Eigen::VectorXd rhs(idx.size());
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    rhs(i) = -g(idx[i]);
                    for (int k = 0; k < nv; ++k)
                        if (held[k]) rhs(i) -= a(idx[i], k) * d(k);
                    for (std::size_t j = 0; j < idx.size(); ++j) af(i, j) = a(idx[i], idx[j]);
                }
                const Eigen::VectorXd df = af.ldlt().solve(rhs);
                bool clipped = false;
                for (std::size_t i = 0; i < idx.size(); ++i) {
                    const int k = idx[i];
                    d(k) = df(i);
                    if (x[k] + d(k) < lo[k] || x[k] + d(k) > hi[k]) {
                        d(k) = std::clamp(x[k] + d(k), lo[k], hi[k]) - x[k];
                        held[k] = 1;
                        clipped = true;
                    }
                }
                if (!clipped) break;
            }
            auto xn = x;
            for (int k = 0; k < nv; ++k) xn[k] = std::clamp(x[k] + d(k), lo[k], hi[k]);
            return xn;
        };

        bool accepted = false, stalled = false;
        for (int tries = 0; tries < 30 && !accepted; ++tries) {
            Eigen::MatrixXd a = jtj;
            for (int k = 0; k < nv; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-12);
            std::vector<std::array<double, 5>> candidates = {projected_step(a, pinned)};
            if (any_weak) candidates.push_back(projected_step(a, weak));
            for (const auto& xn : candidates) {
                Vec5 rn;
                if (xn != x && residual(xn, rn) && rn.squaredNorm() < cost) {
                    stalled = rn.squaredNorm() > (1.0 - 1e-10) * cost;
                    x = xn;
                    r = rn;
                    cost = rn.squaredNorm();
                    accepted = true;
                }
            }
            lambda = accepted ? std::max(lambda / 3.0, 1e-12) : lambda * 4.0;
        }
        if (!accepted || stalled) break;
    }
    return {x, r.cwiseAbs().maxCoeff()};
}

// Per-sample inversion with continuation; a sample that fails from the previous
// solution is retried from the decoupled estimate. Throws InversionError.
inline InversionResult invert_schedule(const CircuitModel& m, const std::vector<IsingPoint>& targets,
                                       const InversionOptions& opt = {}) {
    InversionResult out;
    if (targets.empty()) return out;
    const auto table = detail::seed_table(m, opt.table_points);
    const auto& cc = m.params().coupler;
    std::array<double, 5> prev{};
    bool have_prev = false;
    for (std::size_t k = 0; k < targets.size(); ++k) {
        const IsingPoint& tg = targets[k];
        const double mlo = cc.min_coupling(), mhi = cc.max_coupling();
        SolveOutcome best{{}, std::numeric_limits<double>::infinity()};
        if (have_prev) best = solve_point(m, tg, prev, opt);
        if (!(best.residual < opt.tolerance)) {
            const auto guess = detail::seed_guess(table, tg);
            if (!(guess[4] * cc.m0 >= 1.5 * mlo && guess[4] * cc.m0 <= 1.5 * mhi))
                throw InversionError(k, best.residual, "coupling outside the coupler range");
            const auto fresh = solve_point(m, tg, guess, opt);
            if (fresh.residual < best.residual) best = fresh;
        }
        if (!(best.residual < opt.tolerance)) throw InversionError(k, best.residual, "no convergence");
        const auto& x = best.x;
        const double coupling = tg.Jzz == 0.0 ? 0.0 : x[4] * cc.m0;
        FluxPoint f{x[0], x[1], x[2], x[3], cc.inverse(coupling)};
        for (int i = 0; i < 2; ++i) {
            const double fx = i == 0 ? f.fx1 : f.fx2, fz = i == 0 ? f.fz1 : f.fz2;
            if (!(truncation_shift(m, i, fx, fz) < kTruncationTolerance))
                throw InversionError(k, best.residual, "oscillator truncation not converged");
        }
        out.fluxes.push_back(f);
        out.residuals.push_back(best.residual);
        prev = x;
        have_prev = true;
    }
    return out;
}

// Max |extracted - target| over all samples and the five coefficients.
inline double roundtrip_check(const CircuitModel& m, const std::vector<FluxPoint>& fluxes,
                              const std::vector<IsingPoint>& targets) {
    if (fluxes.size() != targets.size()) throw DomainError("flux and target schedules differ in length");
    double worst = 0.0;
    for (std::size_t k = 0; k < fluxes.size(); ++k) {
        const auto got = pauli_coefficients(m, fluxes[k]).coefficients();
        const auto want = targets[k].coefficients();
        for (int j = 0; j < 5; ++j) worst = std::max(worst, std::abs(got[j] - want[j]));
    }
    return worst;
}

// Largest per-sample step of any column, relative to that column's range.
template <typename Row, typename Columns>
double schedule_roughness(const std::vector<Row>& rows, Columns columns) {
    if (rows.size() < 2) return 0.0;
    const auto first = columns(rows.front());
    double worst = 0.0;
    for (std::size_t c = 0; c < first.size(); ++c) {
        double lo = first[c], hi = first[c], jump = 0.0;
        for (std::size_t k = 0; k < rows.size(); ++k) {
            const double v = columns(rows[k])[c];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            if (k > 0) jump = std::max(jump, std::abs(v - columns(rows[k - 1])[c]));
        }
        if (hi > lo) worst = std::max(worst, jump / (hi - lo));
    }
    return worst;
}

inline double flux_roughness(const std::vector<FluxPoint>& f) {
    return schedule_roughness(f, [](const FluxPoint& p) { return std::array<double, 5>{p.fx1, p.fx2, p.fz1, p.fz2, p.fc}; });
}

inline double ising_roughness(const std::vector<IsingPoint>& s) {
    return schedule_roughness(s, [](const IsingPoint& p) { return p.coefficients(); });
}

// ---------------------------------------------------------------------------
// Two-qubit circuit spectrum.

// Lowest four levels of H1 (x) 1 + 1 (x) H2 + M Ip1 (x) Ip2 by dense diagonalization,
// assembled in the product eigenbasis. `levels_per_qubit` (0 = all N) limits the
// single-qubit states kept; with all of them the spectrum is that of the full
// oscillator-basis operator.
inline Vec4 circuit_levels_at(const CircuitModel& m, const FluxPoint& f, int levels_per_qubit = 0) {
    f.validate(m.params().fx_max);
    const QubitEigen q1 = qubit_eigen(m.basis(0).operators(f.fx1, f.fz1));
    const QubitEigen q2 = qubit_eigen(m.basis(1).operators(f.fx2, f.fz2));
    const int n = m.params().N;
    const int k = levels_per_qubit <= 0 ? n : std::min(levels_per_qubit, n);
    if (k < 2) throw DomainError("need at least two levels per qubit");
    const double coupling = m.params().coupler(f.fc);
    MatX h = coupling * kron(MatX(q1.Ip.topLeftCorner(k, k)), MatX(q2.Ip.topLeftCorner(k, k)));
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) h(a * k + b, a * k + b) += q1.energies(a) + q2.energies(b);
    Eigen::SelfAdjointEigenSolver<MatX> es(h, Eigen::EigenvaluesOnly);
    return es.eigenvalues().head<4>();
}

struct CircuitLevelRow {
    double t;
    Vec4 levels;
};

inline std::vector<CircuitLevelRow> circuit_levels(const CircuitModel& m, const std::vector<double>& times,
                                                   const std::vector<FluxPoint>& fluxes, int levels_per_qubit = 0) {
    if (times.size() != fluxes.size()) throw DomainError("time and flux schedules differ in length");
    std::vector<CircuitLevelRow> out;
    out.reserve(fluxes.size());
    for (std::size_t k = 0; k < fluxes.size(); ++k) out.push_back({times[k], circuit_levels_at(m, fluxes[k], levels_per_qubit)});
    return out;
}

}  // namespace gadget
