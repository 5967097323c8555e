#include "compsplat/quaternion.hpp"

#include <algorithm>
#include <cmath>

namespace compsplat::quat {

Vec4 from_axis_angle(const Vec3& axis, double angle_rad) {
    const Vec3 a = axis.normalized();
    const double h = 0.5 * angle_rad;
    const double s = std::sin(h);
    return {std::cos(h), a.x() * s, a.y() * s, a.z() * s};
}

Mat3 to_rotation_unit(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

Vec4 to_rotation_unit_backward(const Vec4& q, const Mat3& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 d;
    d[0] = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2.0 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) +
                  w * g(2, 1) - 2.0 * x * g(2, 2));
    d[2] = 2.0 * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) +
                  z * g(2, 1) - 2.0 * y * g(2, 2));
    d[3] = 2.0 * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) +
                  y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return d;
}

Vec4 normalized(const Vec4& q_raw) { return q_raw / q_raw.norm(); }

Vec4 normalize_backward(const Vec4& q_raw, const Vec4& d_normalized) {
    const double n = q_raw.norm();
    const Vec4 qh = q_raw / n;
    return (d_normalized - qh * qh.dot(d_normalized)) / n;
}

Mat3 to_rotation(const Vec4& q_raw) { return to_rotation_unit(normalized(q_raw)); }

Vec4 to_rotation_backward(const Vec4& q_raw, const Mat3& d_rotation) {
    return normalize_backward(q_raw, to_rotation_unit_backward(normalized(q_raw), d_rotation));
}

namespace {

Eigen::Matrix4d left_matrix(const Vec4& a) {
    Eigen::Matrix4d m;
    m << a[0], -a[1], -a[2], -a[3],
        a[1], a[0], -a[3], a[2],
        a[2], a[3], a[0], -a[1],
        a[3], -a[2], a[1], a[0];
    return m;
}

Eigen::Matrix4d right_matrix(const Vec4& b) {
    Eigen::Matrix4d m;
    m << b[0], -b[1], -b[2], -b[3],
        b[1], b[0], b[3], -b[2],
        b[2], -b[3], b[0], b[1],
        b[3], b[2], -b[1], b[0];
    return m;
}

}  // namespace

Vec4 multiply(const Vec4& a, const Vec4& b) { return left_matrix(a) * b; }

void multiply_backward(const Vec4& a, const Vec4& b, const Vec4& d_out, Vec4& d_a, Vec4& d_b) {
    d_a = right_matrix(b).transpose() * d_out;
    d_b = left_matrix(a).transpose() * d_out;
}

Vec3 rotate(const Vec4& q_unit, const Vec3& v) { return to_rotation_unit(q_unit) * v; }

Vec4 conjugate(const Vec4& q) { return {q[0], -q[1], -q[2], -q[3]}; }

Vec4 slerp(const Vec4& q0, const Vec4& q1_in, double w) {
    Vec4 q1 = q1_in;
    double c = q0.dot(q1);
    if (c < 0.0) {
        q1 = -q1;
        c = -c;
    }
    if (c > 1.0 - 1e-12) {
        return normalized(q0 + w * (q1 - q0));
    }
    const double theta = std::acos(std::clamp(c, -1.0, 1.0));
    const double s = std::sin(theta);
    const double a = std::sin((1.0 - w) * theta) / s;
    const double b = std::sin(w * theta) / s;
    return a * q0 + b * q1;
}

void slerp_backward(const Vec4& q0, const Vec4& q1_in, double w, const Vec4& d_out, Vec4& d_q0, Vec4& d_q1) {
    Vec4 q1 = q1_in;
    double c = q0.dot(q1);
    const double sign = c < 0.0 ? -1.0 : 1.0;
    q1 *= sign;
    c *= sign;
    if (c > 1.0 - 1e-12) {
        const Vec4 p = q0 + w * (q1 - q0);
        const Vec4 dp = normalize_backward(p, d_out);
        d_q0 = (1.0 - w) * dp;
        d_q1 = sign * w * dp;
        return;
    }
    const double theta = std::acos(std::clamp(c, -1.0, 1.0));
    const double s = std::sin(theta);
    const double ct = std::cos(theta);
    const double a = std::sin((1.0 - w) * theta) / s;
    const double b = std::sin(w * theta) / s;
    const double da = ((1.0 - w) * std::cos((1.0 - w) * theta) * s - std::sin((1.0 - w) * theta) * ct) / (s * s);
    const double db = (w * std::cos(w * theta) * s - std::sin(w * theta) * ct) / (s * s);
    // dθ/dc = -1/sinθ
    const double d_c = -(d_out.dot(q0) * da + d_out.dot(q1) * db) / s;
    d_q0 = a * d_out + d_c * q1;
    d_q1 = sign * (b * d_out + d_c * q0);
}

double angle_between(const Vec4& a, const Vec4& b) {
    const double c = std::abs(normalized(a).dot(normalized(b)));
    return 2.0 * std::acos(std::clamp(c, 0.0, 1.0));
}

}  // namespace compsplat::quat
