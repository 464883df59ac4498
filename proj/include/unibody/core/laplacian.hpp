/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/core/laplacian.hpp
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

#include "Eigen/Core"
#include "Eigen/SparseCore"

#include <map>
#include <utility>
#include <vector>

namespace unibody {
namespace core {

/**
 * Cotangent-weight mesh Laplacian. Symmetric, zero row sums, nonpositive
 * off-diagonals (each cotangent is clamped to a positive range, so obtuse
 * triangles cannot flip edge-weight signs).
 */
struct LaplacianOp
{
    Eigen::SparseMatrix<double> matrix;
    std::vector<int> skipped_triangles; // zero-area triangles that contributed nothing
};

inline LaplacianOp build_laplacian(const Mesh& mesh, double cot_min = 1e-6, double cot_max = 1e6)
{
    validate(mesh);
    const int n = mesh.num_vertices();
    LaplacianOp op;

    // Accumulate per-edge weights: w_ij = (cot(alpha) + cot(beta)) / 2 over
    // the (up to two) triangles containing edge (i, j).
    std::map<std::pair<int, int>, double> edge_weights;
    for (int t = 0; t < mesh.num_triangles(); ++t)
    {
        const auto& tri = mesh.triangles[t];
        const Eigen::Vector3d& a = mesh.vertices[tri[0]];
        const Eigen::Vector3d& b = mesh.vertices[tri[1]];
        const Eigen::Vector3d& c = mesh.vertices[tri[2]];
        const double double_area = (b - a).cross(c - a).norm();
        if (double_area == 0.0)
        {
            op.skipped_triangles.push_back(t);
            continue;
        }
        // Corner k faces the edge formed by the other two vertices.
        for (int k = 0; k < 3; ++k)
        {
            const int i = tri[(k + 1) % 3];
            const int j = tri[(k + 2) % 3];
            const Eigen::Vector3d& apex = mesh.vertices[tri[k]];
            const Eigen::Vector3d u = mesh.vertices[i] - apex;
            const Eigen::Vector3d v = mesh.vertices[j] - apex;
            double cot = u.dot(v) / u.cross(v).norm();
            cot = std::min(std::max(cot, cot_min), cot_max);
            const auto key = std::minmax(i, j);
            edge_weights[key] += 0.5 * cot;
        }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(edge_weights.size() * 4);
    std::vector<double> diagonal(n, 0.0);
    for (const auto& [edge, w] : edge_weights)
    {
        triplets.emplace_back(edge.first, edge.second, -w);
        triplets.emplace_back(edge.second, edge.first, -w);
        diagonal[edge.first] += w;
        diagonal[edge.second] += w;
    }
    for (int i = 0; i < n; ++i)
        if (diagonal[i] != 0.0)
            triplets.emplace_back(i, i, diagonal[i]);

    op.matrix.resize(n, n);
    op.matrix.setFromTriplets(triplets.begin(), triplets.end());
    return op;
}

} // namespace core
} // namespace unibody
