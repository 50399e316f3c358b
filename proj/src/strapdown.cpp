#include "mains/strapdown.hpp"

#include "mains/errors.hpp"

namespace mains {

NavState propagate(const NavState& x, const ImuSample& u, double ts, const Vec3& gravity) {
    if (!(ts > 0.0)) {
        throw ConfigError(msg("propagate needs Ts > 0, got ", ts));
    }
    const Vec3 s = u.specific_force - x.bias_acc;
    const Vec3 w = u.angular_rate - x.bias_gyro;
    const Mat3 r = quat_to_rot(x.q);
    const Vec3 a = r * s + gravity;

    NavState next = x;
    next.p = x.p + x.v * ts + 0.5 * ts * ts * a;
    next.v = x.v + a * ts;
    next.q = quat_mul(x.q, quat_exp(w * ts));
    return next;
}

PoseDelta pose_delta(const NavState& x, const ImuSample& u, double ts, const Vec3& gravity) {
    if (!(ts > 0.0)) {
        throw ConfigError(msg("pose_delta needs Ts > 0, got ", ts));
    }
    const Vec3 s = u.specific_force - x.bias_acc;
    const Vec3 w = u.angular_rate - x.bias_gyro;
    const Mat3 r = quat_to_rot(x.q);

    PoseDelta psi;
    psi.dp = r.transpose() * (x.v * ts + 0.5 * ts * ts * (r * s + gravity));
    psi.dphi = w * ts;
    return psi;
}

}  // namespace mains
