#pragma once

#include "mains/field_model.hpp"
#include "mains/geometry.hpp"

namespace mains {

// Strapdown INS navigation state. Navigation frame is ENU; attitude q rotates
// body-frame vectors into the navigation frame.
struct NavState {
    Vec3 p = Vec3::Zero();           // m
    Vec3 v = Vec3::Zero();           // m/s
    Quat q = Quat::Identity();       // body -> navigation
    Vec3 bias_acc = Vec3::Zero();    // m/s^2
    Vec3 bias_gyro = Vec3::Zero();   // rad/s
};

struct ImuSample {
    Vec3 specific_force = Vec3::Zero();  // m/s^2, body frame
    Vec3 angular_rate = Vec3::Zero();    // rad/s, body frame
    double t = 0.0;                      // s
};

inline constexpr double kDefaultGravity = -9.81;

// One first-order mechanization step: bias-corrected specific force and rate,
// p += v Ts + (R s + g) Ts^2/2, v += (R s + g) Ts, q = q * exp(w Ts).
NavState propagate(const NavState& x, const ImuSample& u, double ts, const Vec3& gravity);

// Body-frame pose change over the same step, consistent with propagate:
// p_next = p + R * dp, and dphi = (w_meas - bias) Ts.
PoseDelta pose_delta(const NavState& x, const ImuSample& u, double ts, const Vec3& gravity);

}  // namespace mains
