/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/measure/triangulate.hpp
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
#include "unibody/measure/keypoints.hpp"

#include "Eigen/Dense"
#include "Eigen/SVD"

#include <map>
#include <optional>
#include <vector>

namespace unibody {
namespace measure {

struct TriangulationOptions
{
    double min_confidence = 0.3;
    int min_views = 2;
    double max_reprojection_px = 8.0; // one outlier-rejection pass
};

namespace detail {

inline std::optional<Eigen::Vector3d> solve_dlt(const std::vector<const Detection2D*>& obs,
                                                const std::map<int, const Camera*>& cameras)
{
    Eigen::MatrixXd a(2 * obs.size(), 4);
    for (std::size_t i = 0; i < obs.size(); ++i)
    {
        const auto& p = cameras.at(obs[i]->view)->projection;
        const double w = obs[i]->confidence;
        a.row(2 * i) = w * (obs[i]->pixel.x() * p.row(2) - p.row(0));
        a.row(2 * i + 1) = w * (obs[i]->pixel.y() * p.row(2) - p.row(1));
    }
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinV);
    // A two-dimensional nullspace means the rays agree on a whole line
    // (coincident cameras); a vanishing homogeneous coordinate means parallel
    // rays meeting at infinity. Both are degenerate.
    const auto& sv = svd.singularValues();
    if (sv[2] < 1e-9 * sv[0])
        return std::nullopt;
    const Eigen::Vector4d h = svd.matrixV().col(3);
    if (std::abs(h[3]) < 1e-12 * h.head<3>().norm())
        return std::nullopt;
    return Eigen::Vector3d(h.head<3>() / h[3]);
}

} // namespace detail

/**
 * Confidence-weighted linear (DLT) triangulation of one keypoint from its
 * multi-view detections, with a single reprojection-based outlier pass.
 * Returns std::nullopt when fewer than `min_views` detections clear the
 * confidence threshold or the geometry is degenerate.
 */
inline std::optional<Keypoint3D> triangulate(const std::vector<Detection2D>& observations,
                                             const std::vector<Camera>& cameras,
                                             const TriangulationOptions& options = {})
{
    std::map<int, const Camera*> by_view;
    for (const auto& c : cameras)
        by_view[c.view] = &c;

    std::vector<const Detection2D*> used;
    for (const auto& d : observations)
    {
        if (d.confidence < options.min_confidence)
            continue;
        if (!by_view.count(d.view))
            throw std::invalid_argument("triangulate: detection references unknown view " +
                                        std::to_string(d.view));
        used.push_back(&d);
    }
    if (static_cast<int>(used.size()) < options.min_views)
        return std::nullopt;

    auto solution = detail::solve_dlt(used, by_view);
    if (!solution)
        return std::nullopt;

    // Drop gross outliers once and re-solve if enough views survive.
    std::vector<const Detection2D*> inliers;
    for (const auto* d : used)
    {
        const auto px = project(*by_view.at(d->view), *solution);
        if (px && (*px - d->pixel).norm() <= options.max_reprojection_px)
            inliers.push_back(d);
    }
    if (static_cast<int>(inliers.size()) >= options.min_views && inliers.size() < used.size())
    {
        if (auto refined = detail::solve_dlt(inliers, by_view))
        {
            solution = refined;
            used = inliers;
        }
    }

    Keypoint3D result;
    result.id = observations.front().id;
    result.position = *solution;
    result.support = static_cast<int>(used.size());
    return result;
}

/// Triangulates every keypoint id present in one frame's detections.
inline std::vector<Keypoint3D> triangulate_frame(const std::vector<Detection2D>& detections,
                                                 const std::vector<Camera>& cameras,
                                                 const TriangulationOptions& options = {})
{
    std::map<std::string, std::vector<Detection2D>> by_id;
    for (const auto& d : detections)
        by_id[d.id].push_back(d);
    std::vector<Keypoint3D> points;
    for (const auto& [id, obs] : by_id)
        if (auto kp = triangulate(obs, cameras, options))
            points.push_back(*kp);
    return points;
}

} // namespace measure
} // namespace unibody
