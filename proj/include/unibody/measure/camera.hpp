/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/measure/camera.hpp
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
#include "Eigen/Dense"

#include "json.hpp"

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace unibody {
namespace measure {

/// A calibrated pinhole camera as a 3x4 projection matrix plus image size.
struct Camera
{
    Eigen::Matrix<double, 3, 4> projection = Eigen::Matrix<double, 3, 4>::Zero();
    int width = 0;
    int height = 0;
    int view = 0;
};

/// Homogeneous projection; returns (u, v) when the point is in front of the
/// camera, std::nullopt otherwise. Points outside the image still project.
inline std::optional<Eigen::Vector2d> project(const Camera& camera, const Eigen::Vector3d& point)
{
    const Eigen::Vector3d h = camera.projection * point.homogeneous();
    if (h.z() <= 1e-12)
        return std::nullopt;
    return Eigen::Vector2d(h.x() / h.z(), h.y() / h.z());
}

inline bool in_image(const Camera& camera, const Eigen::Vector2d& px)
{
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() < camera.width && px.y() < camera.height;
}

struct CameraDecomposition
{
    Eigen::Matrix3d intrinsics; // upper triangular, positive diagonal
    Eigen::Matrix3d rotation;   // orthonormal (determinant may be -1 for mirrored calibrations)
    Eigen::Vector3d center;
};

/// RQ decomposition of the left 3x3 block plus the camera center.
inline CameraDecomposition decompose(const Camera& camera)
{
    const Eigen::Matrix3d m = camera.projection.leftCols<3>();
    if (std::abs(m.determinant()) < 1e-15)
        throw std::invalid_argument("Camera: projection has singular left 3x3 block");

    // RQ via QR of the row-reversed transpose.
    Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
    e(0, 2) = e(1, 1) = e(2, 0) = 1.0;
    const Eigen::Matrix3d flipped = (e * m).transpose();
    const Eigen::HouseholderQR<Eigen::Matrix3d> qr(flipped);
    const Eigen::Matrix3d q = qr.householderQ();
    const Eigen::Matrix3d u = qr.matrixQR().triangularView<Eigen::Upper>();

    CameraDecomposition out;
    out.intrinsics = e * u.transpose() * e;
    out.rotation = e * q.transpose();
    for (int i = 0; i < 3; ++i)
        if (out.intrinsics(i, i) < 0.0)
        {
            out.intrinsics.col(i) *= -1.0;
            out.rotation.row(i) *= -1.0;
        }
    out.center = -m.lu().solve(camera.projection.col(3));
    return out;
}

inline void validate(const Camera& camera)
{
    if (camera.width <= 0 || camera.height <= 0)
        throw std::invalid_argument("Camera: image size must be positive");
    const auto dec = decompose(camera);
    const Eigen::Matrix3d gram = dec.rotation * dec.rotation.transpose();
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw std::invalid_argument("Camera: decomposed rotation is not orthonormal");
}

inline nlohmann::json to_json(const Camera& camera)
{
    std::vector<double> p(12);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            p[4 * r + c] = camera.projection(r, c);
    return {{"view", camera.view}, {"P", p}, {"width", camera.width}, {"height", camera.height}};
}

inline Camera camera_from_json(const nlohmann::json& j)
{
    Camera camera;
    camera.view = j.at("view").get<int>();
    camera.width = j.at("width").get<int>();
    camera.height = j.at("height").get<int>();
    const auto p = j.at("P").get<std::vector<double>>();
    if (p.size() != 12)
        throw std::invalid_argument("Camera: P must hold 12 row-major numbers");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c)
            camera.projection(r, c) = p[4 * r + c];
    validate(camera);
    return camera;
}

inline void save_cameras(const std::vector<Camera>& cameras, const std::string& path)
{
    nlohmann::json j;
    j["cameras"] = nlohmann::json::array();
    for (const auto& c : cameras)
        j["cameras"].push_back(to_json(c));
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
}

inline std::vector<Camera> load_cameras(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open for reading: " + path);
    nlohmann::json j;
    in >> j;
    std::vector<Camera> cameras;
    for (const auto& c : j.at("cameras"))
        cameras.push_back(camera_from_json(c));
    return cameras;
}

} // namespace measure
} // namespace unibody
