#pragma once

#include "compsplat/types.hpp"

namespace compsplat::quat {

// Quaternions are stored as (w, x, y, z).

inline Vec4 identity() { return {1.0, 0.0, 0.0, 0.0}; }

Vec4 from_axis_angle(const Vec3& axis, double angle_rad);

/// Rotation matrix of a unit quaternion (no normalization performed).
Mat3 to_rotation_unit(const Vec4& q);

/// Contracts dL/dR against dR/dq, treating the unit-quaternion formula as a
/// polynomial in the four components.
Vec4 to_rotation_unit_backward(const Vec4& q, const Mat3& d_rotation);

/// Rotation matrix of q/|q|.
Mat3 to_rotation(const Vec4& q_raw);
Vec4 to_rotation_backward(const Vec4& q_raw, const Mat3& d_rotation);

Vec4 normalized(const Vec4& q_raw);
/// Gradient of q/|q| pulled back to the raw quaternion.
Vec4 normalize_backward(const Vec4& q_raw, const Vec4& d_normalized);

/// Hamilton product a ⊗ b.
Vec4 multiply(const Vec4& a, const Vec4& b);
void multiply_backward(const Vec4& a, const Vec4& b, const Vec4& d_out, Vec4& d_a, Vec4& d_b);

Vec3 rotate(const Vec4& q_unit, const Vec3& v);
Vec4 conjugate(const Vec4& q);

/// Spherical linear interpolation with shortest-arc sign correction.
Vec4 slerp(const Vec4& q0, const Vec4& q1, double w);
/// Gradients of slerp with respect to its (unit) endpoints.
void slerp_backward(const Vec4& q0, const Vec4& q1, double w, const Vec4& d_out, Vec4& d_q0, Vec4& d_q1);

/// Rotation angle in radians between two unit quaternions (sign-invariant).
double angle_between(const Vec4& a, const Vec4& b);

}  // namespace compsplat::quat
