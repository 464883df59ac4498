/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/core/point_cloud.hpp
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

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace unibody {
namespace core {

/// A set of 3D points with unit normals (same length).
struct OrientedPointCloud
{
    std::vector<Eigen::Vector3d> points;
    std::vector<Eigen::Vector3d> normals;

    int size() const { return static_cast<int>(points.size()); }
    bool empty() const { return points.empty(); }
};

inline void validate(const OrientedPointCloud& cloud)
{
    if (cloud.points.size() != cloud.normals.size())
        throw std::invalid_argument("OrientedPointCloud: point/normal count mismatch");
    for (const auto& n : cloud.normals)
        if (std::abs(n.norm() - 1.0) > 1e-6)
            throw std::invalid_argument("OrientedPointCloud: normals must be unit length");
}

/**
 * Uniform hash-grid over a point cloud for nearest-compatible-point queries.
 * The contract is exact equivalence with a brute-force scan: the query visits
 * every cell intersecting the search sphere, and ties on distance resolve to
 * the lowest point index regardless of traversal order.
 */
class PointCloudIndex
{
public:
    explicit PointCloudIndex(const OrientedPointCloud& cloud, double cell_size = 0.05)
        : cloud_(&cloud), cell_size_(cell_size > 0.0 ? cell_size : 0.05)
    {
        validate(cloud);
        cells_.reserve(cloud.points.size());
        for (int i = 0; i < cloud.size(); ++i)
            cells_[key(cloud.points[i])].push_back(i);
    }

    const OrientedPointCloud& cloud() const { return *cloud_; }

    /**
     * Nearest cloud point to `position` among those with distance <= max_dist
     * and angle(normal, point normal) <= max_normal_angle (radians). Returns
     * std::nullopt when nothing qualifies.
     */
    std::optional<int> closest_compatible_point(const Eigen::Vector3d& position,
                                                const Eigen::Vector3d& normal, double max_dist,
                                                double max_normal_angle) const
    {
        const double max_d2 = max_dist * max_dist;
        const double min_cos = std::cos(max_normal_angle);
        int best = -1;
        double best_d2 = std::numeric_limits<double>::infinity();

        const auto lo = grid_coord(position - Eigen::Vector3d::Constant(max_dist));
        const auto hi = grid_coord(position + Eigen::Vector3d::Constant(max_dist));
        for (std::int64_t x = lo[0]; x <= hi[0]; ++x)
            for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
                for (std::int64_t z = lo[2]; z <= hi[2]; ++z)
                {
                    const auto it = cells_.find(pack(x, y, z));
                    if (it == cells_.end())
                        continue;
                    for (const int i : it->second)
                    {
                        const double d2 = (cloud_->points[i] - position).squaredNorm();
                        if (d2 > max_d2)
                            continue;
                        if (cloud_->normals[i].dot(normal) < min_cos)
                            continue;
                        if (d2 < best_d2 || (d2 == best_d2 && i < best))
                        {
                            best_d2 = d2;
                            best = i;
                        }
                    }
                }
        if (best < 0)
            return std::nullopt;
        return best;
    }

private:
    std::array<std::int64_t, 3> grid_coord(const Eigen::Vector3d& p) const
    {
        return {static_cast<std::int64_t>(std::floor(p.x() / cell_size_)),
                static_cast<std::int64_t>(std::floor(p.y() / cell_size_)),
                static_cast<std::int64_t>(std::floor(p.z() / cell_size_))};
    }

    static std::uint64_t pack(std::int64_t x, std::int64_t y, std::int64_t z)
    {
        // 21 bits per axis, offset to keep coordinates positive.
        const std::uint64_t mask = (1ull << 21) - 1;
        return ((static_cast<std::uint64_t>(x + (1 << 20)) & mask) << 42) |
               ((static_cast<std::uint64_t>(y + (1 << 20)) & mask) << 21) |
               (static_cast<std::uint64_t>(z + (1 << 20)) & mask);
    }

    std::uint64_t key(const Eigen::Vector3d& p) const
    {
        const auto c = grid_coord(p);
        return pack(c[0], c[1], c[2]);
    }

    const OrientedPointCloud* cloud_;
    double cell_size_;
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

/// Brute-force reference with the same compatibility rules and tie-breaking.
inline std::optional<int> closest_compatible_point_linear(const Eigen::Vector3d& position,
                                                          const Eigen::Vector3d& normal,
                                                          const OrientedPointCloud& cloud,
                                                          double max_dist, double max_normal_angle)
{
    const double max_d2 = max_dist * max_dist;
    const double min_cos = std::cos(max_normal_angle);
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int i = 0; i < cloud.size(); ++i)
    {
        const double d2 = (cloud.points[i] - position).squaredNorm();
        if (d2 > max_d2 || cloud.normals[i].dot(normal) < min_cos)
            continue;
        if (d2 < best_d2)
        {
            best_d2 = d2;
            best = i;
        }
    }
    if (best < 0)
        return std::nullopt;
    return best;
}

} // namespace core
} // namespace unibody
