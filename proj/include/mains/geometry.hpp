#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace mains {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Unit quaternion, scalar-first (w, x, y, z) at every interface and in every
// file format of this project. Eigen's constructor takes (w, x, y, z).
using Quat = Eigen::Quaterniond;

// [v]x, so that skew(v) * b == v.cross(b).
Mat3 skew(const Vec3& v);

// Axis-angle to unit quaternion: (cos(|v|/2), sin(|v|/2) v/|v|).
// Below |v| = 1e-8 the second-order series is used.
Quat quat_exp(const Vec3& v);

// Rotation vector of q (inverse of quat_exp), |result| < pi.
Vec3 quat_log(const Quat& q);

// Hamilton product, renormalized.
Quat quat_mul(const Quat& a, const Quat& b);

// Small-perturbation quaternion [1, eps/2], normalized.
Quat error_quat(const Vec3& eps);

Mat3 quat_to_rot(const Quat& q);

// exp([v]x)
Mat3 rot_exp(const Vec3& v);

// d/dv_a exp([v]x) for axis a in {0,1,2}.
Mat3 rot_exp_derivative(const Vec3& v, int axis);

}  // namespace mains
