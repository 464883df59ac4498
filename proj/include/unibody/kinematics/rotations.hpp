/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/kinematics/rotations.hpp
 *
 * Copyright 2026 The unibody authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "Eigen/Core"
#include "Eigen/Geometry"

#include <array>
#include <cmath>

namespace unibody {
namespace kinematics {

inline Eigen::Matrix3d skew(const Eigen::Vector3d& v)
{
    Eigen::Matrix3d m;
    m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return m;
}

/**
 * Rodrigues rotation from an (unnormalized) angle-axis vector: direction is
 * the axis, magnitude the angle in radians. Series expansion keeps the small
 * angle limit exact.
 */
inline Eigen::Matrix3d angle_axis_to_matrix(const Eigen::Vector3d& aa)
{
    const double theta2 = aa.squaredNorm();
    const Eigen::Matrix3d k = skew(aa);
    if (theta2 < 1e-16)
        return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
    const double theta = std::sqrt(theta2);
    return Eigen::Matrix3d::Identity() + (std::sin(theta) / theta) * k +
           ((1.0 - std::cos(theta)) / theta2) * k * k;
}

/**
 * Partial derivatives of the Rodrigues rotation with respect to the three
 * angle-axis components (closed form away from zero, skew-generator limit at
 * zero).
 */
inline std::array<Eigen::Matrix3d, 3> angle_axis_jacobian(const Eigen::Vector3d& aa)
{
    std::array<Eigen::Matrix3d, 3> d;
    const double theta2 = aa.squaredNorm();
    const Eigen::Matrix3d r = angle_axis_to_matrix(aa);
    if (theta2 < 1e-16)
    {
        for (int i = 0; i < 3; ++i)
            d[i] = skew(Eigen::Vector3d::Unit(i)) * r;
        return d;
    }
    const Eigen::Matrix3d eye_minus_r = Eigen::Matrix3d::Identity() - r;
    for (int i = 0; i < 3; ++i)
    {
        const Eigen::Vector3d v =
            (aa[i] * aa + aa.cross(eye_minus_r.col(i))) / theta2;
        d[i] = skew(v) * r;
    }
    return d;
}

/// Angle-axis vector recovering R (log map); angle in [0, pi].
inline Eigen::Vector3d matrix_to_angle_axis(const Eigen::Matrix3d& r)
{
    const Eigen::AngleAxisd aa(r);
    return aa.angle() * aa.axis();
}

inline Eigen::Matrix3d rot_x(double a)
{
    Eigen::Matrix3d m;
    m << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
    return m;
}

inline Eigen::Matrix3d rot_y(double a)
{
    Eigen::Matrix3d m;
    m << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
    return m;
}

inline Eigen::Matrix3d rot_z(double a)
{
    Eigen::Matrix3d m;
    m << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
    return m;
}

/**
 * Intrinsic X-Y-Z Euler rotation: R = Rx(a) * Ry(b) * Rz(c). This is the
 * fixed convention for all Euler-parameterized joints in this library.
 */
inline Eigen::Matrix3d euler_xyz_to_matrix(const Eigen::Vector3d& e)
{
    return rot_x(e.x()) * rot_y(e.y()) * rot_z(e.z());
}

inline std::array<Eigen::Matrix3d, 3> euler_xyz_jacobian(const Eigen::Vector3d& e)
{
    const Eigen::Matrix3d rx = rot_x(e.x());
    const Eigen::Matrix3d ry = rot_y(e.y());
    const Eigen::Matrix3d rz = rot_z(e.z());
    const Eigen::Matrix3d gx = skew(Eigen::Vector3d::UnitX());
    const Eigen::Matrix3d gy = skew(Eigen::Vector3d::UnitY());
    const Eigen::Matrix3d gz = skew(Eigen::Vector3d::UnitZ());
    return {gx * rx * ry * rz, rx * gy * ry * rz, rx * ry * gz * rz};
}

} // namespace kinematics
} // namespace unibody
