#include "mains/geometry.hpp"

#include <cmath>

namespace mains {

namespace {
constexpr double kSmallAngle = 1e-8;
}

Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
        -v.y(), v.x(), 0.0;
    return m;
}

Quat quat_exp(const Vec3& v) {
    const double angle = v.norm();
    if (angle < kSmallAngle) {
        // cos(a/2) ~ 1 - a^2/8, sin(a/2)/a ~ 1/2 - a^2/48
        const double a2 = angle * angle;
        const Vec3 xyz = (0.5 - a2 / 48.0) * v;
        Quat q(1.0 - a2 / 8.0, xyz.x(), xyz.y(), xyz.z());
        q.normalize();
        return q;
    }
    const double half = 0.5 * angle;
    const Vec3 xyz = (std::sin(half) / angle) * v;
    Quat q(std::cos(half), xyz.x(), xyz.y(), xyz.z());
    q.normalize();
    return q;
}

Vec3 quat_log(const Quat& q) {
    Quat qn = q.normalized();
    if (qn.w() < 0.0) {
        qn.coeffs() = -qn.coeffs();
    }
    const Vec3 xyz = qn.vec();
    const double s = xyz.norm();
    if (s < 1e-12) {
        return 2.0 / qn.w() * xyz;
    }
    const double angle = 2.0 * std::atan2(s, qn.w());
    return (angle / s) * xyz;
}

Quat quat_mul(const Quat& a, const Quat& b) {
    Quat q = a * b;
    q.normalize();
    return q;
}

Quat error_quat(const Vec3& eps) {
    Quat q(1.0, 0.5 * eps.x(), 0.5 * eps.y(), 0.5 * eps.z());
    q.normalize();
    return q;
}

Mat3 quat_to_rot(const Quat& q) {
    return q.normalized().toRotationMatrix();
}

Mat3 rot_exp(const Vec3& v) {
    return quat_exp(v).toRotationMatrix();
}

Mat3 rot_exp_derivative(const Vec3& v, int axis) {
    Vec3 e = Vec3::Zero();
    e(axis) = 1.0;
    const double n = v.norm();
    if (n < 1e-4) {
        // Derivative of I + [v]x + [v]x^2/2, accurate to O(|v|^2).
        const Mat3 vx = skew(v);
        const Mat3 ex = skew(e);
        return ex + 0.5 * (vx * ex + ex * vx);
    }
    // Gallego & Yezzi closed form for d exp([v]x)/dv_a.
    const Mat3 r = rot_exp(v);
    const Vec3 w = v.cross((Mat3::Identity() - r) * e);
    return ((v(axis) * skew(v) + skew(w)) / (n * n)) * r;
}

}  // namespace mains
