/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/measure/regressor_build.hpp
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

#include "unibody/core/mesh.hpp"
#include "unibody/measure/keypoints.hpp"

#include <string>
#include <variant>
#include <vector>

namespace unibody {
namespace measure {

/// Anchor description for one keypoint target: either a surface point or a
/// joint-center style weighted vertex ring.
struct KeypointAnchor
{
    std::string id;
    // Surface anchors carry barycentric coordinates on a rest-mesh triangle;
    // joint-center anchors carry (vertex, weight) pairs, typically a skinning
    // weight column.
    std::variant<core::SurfacePoint, std::vector<std::pair<int, double>>> anchor;
};

/**
 * Builds regressor rows from anchor specs on the rest mesh. Surface anchors
 * become their barycentric weights; joint-center anchors become the weighted
 * vertex ring average, truncated to the 20 largest weights and renormalized.
 * Throws when a predicted target escapes the mesh bounding volume.
 */
inline KeypointRegressor build_keypoint_regressor(const core::Mesh& rest,
                                                  const std::vector<KeypointAnchor>& anchors)
{
    validate(rest);
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (const auto& v : rest.vertices)
    {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Eigen::Vector3d margin = 0.05 * (hi - lo) + Eigen::Vector3d::Constant(1e-9);

    KeypointRegressor regressor;
    std::vector<Eigen::Triplet<double>> triplets;
    for (const auto& spec : anchors)
    {
        const int row = static_cast<int>(regressor.ids.size());
        std::vector<std::pair<int, double>> entries;
        if (const auto* sp = std::get_if<core::SurfacePoint>(&spec.anchor))
        {
            validate(*sp, rest);
            const auto& tri = rest.triangles[sp->triangle];
            for (int c = 0; c < 3; ++c)
                if (sp->barycentric[c] > 0.0)
                    entries.emplace_back(tri[c], sp->barycentric[c]);
        }
        else
        {
            entries = std::get<std::vector<std::pair<int, double>>>(spec.anchor);
            std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
                return a.second > b.second || (a.second == b.second && a.first < b.first);
            });
            if (entries.size() > 20)
                entries.resize(20);
        }
        if (entries.empty())
            throw std::invalid_argument("build_keypoint_regressor: empty anchor for " + spec.id);

        double sum = 0.0;
        Eigen::Vector3d target = Eigen::Vector3d::Zero();
        for (auto& [vertex, weight] : entries)
        {
            if (vertex < 0 || vertex >= rest.num_vertices() || weight < 0.0)
                throw std::invalid_argument("build_keypoint_regressor: bad anchor entry for " +
                                            spec.id);
            sum += weight;
        }
        for (auto& [vertex, weight] : entries)
        {
            weight /= sum;
            target += weight * rest.vertices[vertex];
            triplets.emplace_back(row, vertex, weight);
        }
        if ((target.array() < (lo - margin).array()).any() ||
            (target.array() > (hi + margin).array()).any())
            throw std::invalid_argument("build_keypoint_regressor: anchor for " + spec.id +
                                        " lies outside the mesh bounding volume");
        regressor.ids.push_back(spec.id);
    }
    regressor.rows.resize(static_cast<int>(regressor.ids.size()), rest.num_vertices());
    regressor.rows.setFromTriplets(triplets.begin(), triplets.end());
    validate(regressor);
    return regressor;
}

} // namespace measure
} // namespace unibody
