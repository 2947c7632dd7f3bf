#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gadget {

using cplx = std::complex<double>;
using Mat2c = Eigen::Matrix2cd;
using Mat4 = Eigen::Matrix4d;
using Mat4c = Eigen::Matrix4cd;
using Vec4 = Eigen::Vector4d;
using Vec4c = Eigen::Vector4cd;
using MatX = Eigen::MatrixXd;
using MatXc = Eigen::MatrixXcd;
using VecX = Eigen::VectorXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kI{0.0, 1.0};

// Argument outside the domain an operation is defined on.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// An iterative procedure failed to reach its tolerance.
struct ConvergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace pauli {

inline Mat2c I() { return Mat2c::Identity(); }
inline Mat2c X() {
    Mat2c m;
    m << 0, 1, 1, 0;
    return m;
}
inline Mat2c Y() {
    Mat2c m;
    m << 0, -kI, kI, 0;
    return m;
}
inline Mat2c Z() {
    Mat2c m;
    m << 1, 0, 0, -1;
    return m;
}
inline Mat2c by_index(int k) {
    switch (k) {
        case 0: return I();
        case 1: return X();
        case 2: return Y();
        default: return Z();
    }
}
inline constexpr char kLabels[4] = {'I', 'X', 'Y', 'Z'};

}  // namespace pauli

// First argument is the left (most significant) tensor factor.
template <typename A, typename B>
Eigen::Matrix<typename A::Scalar, Eigen::Dynamic, Eigen::Dynamic> kron(const Eigen::MatrixBase<A>& a,
                                                                       const Eigen::MatrixBase<B>& b) {
    Eigen::Matrix<typename A::Scalar, Eigen::Dynamic, Eigen::Dynamic> out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Mat4c kron2(const Mat2c& a, const Mat2c& b) { return kron(a, b); }

// max_ij |(U^dagger U - I)_ij|
template <typename M>
double unitarity_error(const Eigen::MatrixBase<M>& u) {
    const auto n = u.rows();
    return (u.adjoint() * u - Eigen::Matrix<typename M::Scalar, Eigen::Dynamic, Eigen::Dynamic>::Identity(n, n))
        .cwiseAbs()
        .maxCoeff();
}

// Wrap an angle into (-pi, pi].
inline double wrap_angle(double a) {
    double r = std::remainder(a, kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    return r;
}

}  // namespace gadget
