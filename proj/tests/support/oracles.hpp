#pragma once

// Independent oracles used by the test suites: finite differences,
// chi-square bands, and small closed forms. Nothing here calls into the
// implementation paths it is used to check.

#include <cmath>
#include <functional>
#include <random>

#include <Eigen/Dense>

namespace oracle {

// Central-difference Jacobian of f: R^n -> R^m.
inline Eigen::MatrixXd numeric_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                                        const Eigen::VectorXd& x, double h = 1e-6) {
    const Eigen::VectorXd f0 = f(x);
    Eigen::MatrixXd jac(f0.size(), x.size());
    for (int c = 0; c < x.size(); ++c) {
        Eigen::VectorXd xp = x;
        Eigen::VectorXd xm = x;
        xp(c) += h;
        xm(c) -= h;
        jac.col(c) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return jac;
}

// Central-difference divergence of a vector field R^3 -> R^3.
inline double numeric_divergence(const std::function<Eigen::Vector3d(const Eigen::Vector3d&)>& field,
                                 const Eigen::Vector3d& r, double h = 1e-5) {
    double div = 0.0;
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector3d rp = r;
        Eigen::Vector3d rm = r;
        rp(i) += h;
        rm(i) -= h;
        div += (field(rp)(i) - field(rm)(i)) / (2.0 * h);
    }
    return div;
}

// Central-difference curl.
inline Eigen::Vector3d numeric_curl(const std::function<Eigen::Vector3d(const Eigen::Vector3d&)>& field,
                                    const Eigen::Vector3d& r, double h = 1e-5) {
    Eigen::Matrix3d jac;
    for (int i = 0; i < 3; ++i) {
        Eigen::Vector3d rp = r;
        Eigen::Vector3d rm = r;
        rp(i) += h;
        rm(i) -= h;
        jac.col(i) = (field(rp) - field(rm)) / (2.0 * h);
    }
    return Eigen::Vector3d(jac(2, 1) - jac(1, 2), jac(0, 2) - jac(2, 0), jac(1, 0) - jac(0, 1));
}

// 4x4 matrix form of the Hamilton product: L(a) * [b] with scalar-first
// component vectors. Written out independently of the quaternion class.
inline Eigen::Vector4d quat_product_matrix_form(const Eigen::Vector4d& a,
                                                const Eigen::Vector4d& b) {
    Eigen::Matrix4d l;
    l << a(0), -a(1), -a(2), -a(3),
         a(1),  a(0), -a(3),  a(2),
         a(2),  a(3),  a(0), -a(1),
         a(3), -a(2),  a(1),  a(0);
    return l * b;
}

// chi-square quantile via the Wilson-Hilferty cube approximation; excellent
// for the large degrees of freedom used in the Monte-Carlo bands.
inline double chi2_quantile(double dof, double z) {
    const double a = 2.0 / (9.0 * dof);
    const double c = 1.0 - a + z * std::sqrt(a);
    return dof * c * c * c;
}

inline constexpr double kZ995 = 2.575829303548901;   // two-sided 99% band
inline constexpr double kZ975 = 1.959963984540054;   // two-sided 95% band

// One scalar Kalman measurement update, hand-rolled.
struct Scalar1D {
    double x = 0.0;
    double p = 1.0;
    void update(double z, double r) {
        const double s = p + r;
        const double k = p / s;
        x += k * (z - x);
        p = (1.0 - k) * p;
    }
};

// On-axis point-dipole field magnitude: B = mu0 m / (2 pi d^3), in uT with
// d in meters and m in A m^2.
inline double dipole_on_axis_ut(double moment, double distance) {
    return 0.2 * moment / (distance * distance * distance);
}

inline std::mt19937_64 rng(uint64_t seed) { return std::mt19937_64(seed); }

inline Eigen::Vector3d random_vec3(std::mt19937_64& gen, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    return Eigen::Vector3d(u(gen), u(gen), u(gen));
}

inline Eigen::VectorXd random_vec(std::mt19937_64& gen, int n, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = u(gen);
    return v;
}

}  // namespace oracle
