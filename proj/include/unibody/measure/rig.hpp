/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/measure/rig.hpp
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

#include "unibody/measure/camera.hpp"

#include "Eigen/Geometry"

#include <cmath>
#include <vector>

namespace unibody {
namespace measure {

/// Pinhole camera at `position` looking at `target`, principal point at the
/// image center, square pixels with focal length `focal_px`.
inline Camera look_at_camera(const Eigen::Vector3d& position, const Eigen::Vector3d& target,
                             double focal_px, int width, int height, int view = 0,
                             const Eigen::Vector3d& up_hint = Eigen::Vector3d::UnitY())
{
    const Eigen::Vector3d forward = (target - position).normalized();
    Eigen::Vector3d right = forward.cross(up_hint);
    if (right.norm() < 1e-9)
        right = forward.cross(Eigen::Vector3d::UnitX());
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right); // image v grows downward

    Eigen::Matrix3d rotation;
    rotation.row(0) = right.transpose();
    rotation.row(1) = down.transpose();
    rotation.row(2) = forward.transpose();

    Eigen::Matrix3d intrinsics = Eigen::Matrix3d::Identity();
    intrinsics(0, 0) = intrinsics(1, 1) = focal_px;
    intrinsics(0, 2) = width / 2.0;
    intrinsics(1, 2) = height / 2.0;

    Camera camera;
    camera.view = view;
    camera.width = width;
    camera.height = height;
    camera.projection.leftCols<3>() = intrinsics * rotation;
    camera.projection.col(3) = intrinsics * (-rotation * position);
    return camera;
}

/// Ring of cameras around `target`, alternating between two heights.
inline std::vector<Camera> make_circular_rig(int count, const Eigen::Vector3d& target,
                                             double radius, double focal_px, int width, int height,
                                             double low_height = 0.9, double high_height = 2.1)
{
    std::vector<Camera> rig;
    for (int i = 0; i < count; ++i)
    {
        const double angle = 2.0 * M_PI * i / count;
        const double h = (i % 2 == 0) ? low_height : high_height;
        const Eigen::Vector3d pos(target.x() + radius * std::cos(angle), h,
                                  target.z() + radius * std::sin(angle));
        rig.push_back(look_at_camera(pos, target, focal_px, width, height, i));
    }
    return rig;
}

} // namespace measure
} // namespace unibody
