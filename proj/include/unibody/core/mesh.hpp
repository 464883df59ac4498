/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/core/mesh.hpp
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
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace unibody {
namespace core {

/**
 * A triangle mesh: vertex positions in meters, triangles as vertex-index
 * triples, and optional per-vertex unit normals.
 */
struct Mesh
{
    std::vector<Eigen::Vector3d> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Eigen::Vector3d> normals; // empty or one unit normal per vertex

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }
};

/// Throws std::invalid_argument if any triangle index is out of range or a
/// normal array of the wrong size is present.
inline void validate(const Mesh& mesh)
{
    const int n = mesh.num_vertices();
    for (std::size_t t = 0; t < mesh.triangles.size(); ++t)
    {
        for (int c = 0; c < 3; ++c)
        {
            const int idx = mesh.triangles[t][c];
            if (idx < 0 || idx >= n)
                throw std::invalid_argument("Mesh: triangle " + std::to_string(t) +
                                            " references vertex " + std::to_string(idx) +
                                            " outside [0, " + std::to_string(n) + ")");
        }
    }
    if (!mesh.normals.empty() && mesh.normals.size() != mesh.vertices.size())
        throw std::invalid_argument("Mesh: normal count does not match vertex count");
}

struct VertexNormalsResult
{
    std::vector<Eigen::Vector3d> normals;
    std::vector<int> degenerate; // vertices with no incident triangle area; their normal is zero
};

/**
 * Area-weighted vertex normals. Each triangle contributes its (unnormalized)
 * cross product to its three corners, which weights faces by area. Vertices
 * that accumulate no area (isolated, or only zero-area fans) are flagged and
 * get a zero normal instead of a fatal error.
 */
inline VertexNormalsResult compute_vertex_normals(const Mesh& mesh)
{
    validate(mesh);
    VertexNormalsResult result;
    result.normals.assign(mesh.vertices.size(), Eigen::Vector3d::Zero());
    for (const auto& tri : mesh.triangles)
    {
        const Eigen::Vector3d& a = mesh.vertices[tri[0]];
        const Eigen::Vector3d cross =
            (mesh.vertices[tri[1]] - a).cross(mesh.vertices[tri[2]] - a);
        if (cross.squaredNorm() == 0.0)
            continue; // zero-area triangle contributes nothing
        for (int c = 0; c < 3; ++c)
            result.normals[tri[c]] += cross;
    }
    for (std::size_t i = 0; i < result.normals.size(); ++i)
    {
        const double len = result.normals[i].norm();
        if (len > 0.0)
            result.normals[i] /= len;
        else
            result.degenerate.push_back(static_cast<int>(i));
    }
    return result;
}

/// Returns a copy of the mesh with freshly computed vertex normals.
inline Mesh with_vertex_normals(Mesh mesh)
{
    mesh.normals = compute_vertex_normals(mesh).normals;
    return mesh;
}

/**
 * A point on a mesh surface: a triangle index plus barycentric coordinates
 * (nonnegative, summing to one).
 */
struct SurfacePoint
{
    int triangle = -1;
    Eigen::Vector3d barycentric = Eigen::Vector3d::Zero();
};

inline void validate(const SurfacePoint& sp, const Mesh& mesh)
{
    if (sp.triangle < 0 || sp.triangle >= mesh.num_triangles())
        throw std::invalid_argument("SurfacePoint: triangle index out of range");
    const double sum = sp.barycentric.sum();
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("SurfacePoint: barycentric coordinates must sum to 1");
    for (int c = 0; c < 3; ++c)
        if (sp.barycentric[c] < -1e-12 || sp.barycentric[c] > 1.0 + 1e-12)
            throw std::invalid_argument("SurfacePoint: barycentric coordinate outside [0,1]");
}

/// World position of a surface point.
inline Eigen::Vector3d surface_position(const Mesh& mesh, const SurfacePoint& sp)
{
    const auto& tri = mesh.triangles[sp.triangle];
    return sp.barycentric[0] * mesh.vertices[tri[0]] + sp.barycentric[1] * mesh.vertices[tri[1]] +
           sp.barycentric[2] * mesh.vertices[tri[2]];
}

namespace detail {

/// Closest point to p on triangle (a,b,c); returns clamped barycentric
/// coordinates. Standard region-based case analysis.
inline Eigen::Vector3d closest_point_on_triangle(const Eigen::Vector3d& p,
                                                 const Eigen::Vector3d& a,
                                                 const Eigen::Vector3d& b,
                                                 const Eigen::Vector3d& c)
{
    const Eigen::Vector3d ab = b - a;
    const Eigen::Vector3d ac = c - a;
    const Eigen::Vector3d ap = p - a;

    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0)
        return {1.0, 0.0, 0.0}; // vertex a

    const Eigen::Vector3d bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3)
        return {0.0, 1.0, 0.0}; // vertex b

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0)
    {
        const double v = d1 / (d1 - d3);
        return {1.0 - v, v, 0.0}; // edge ab
    }

    const Eigen::Vector3d cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6)
        return {0.0, 0.0, 1.0}; // vertex c

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0)
    {
        const double w = d2 / (d2 - d6);
        return {1.0 - w, 0.0, w}; // edge ac
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return {0.0, 1.0 - w, w}; // edge bc
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    return {1.0 - v - w, v, w}; // interior
}

} // namespace detail

struct SurfaceProjection
{
    SurfacePoint point;
    double distance = 0.0;
};

/**
 * Closest point on the mesh surface to a query position, as clamped
 * barycentric coordinates on the winning triangle. Linear scan over
 * triangles; ties resolve to the lowest triangle index.
 */
inline SurfaceProjection barycentric_project(const Eigen::Vector3d& query, const Mesh& mesh)
{
    if (mesh.triangles.empty())
        throw std::invalid_argument("barycentric_project: mesh has no triangles");
    SurfaceProjection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int t = 0; t < mesh.num_triangles(); ++t)
    {
        const auto& tri = mesh.triangles[t];
        const Eigen::Vector3d bary = detail::closest_point_on_triangle(
            query, mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
        const Eigen::Vector3d pos = bary[0] * mesh.vertices[tri[0]] +
                                    bary[1] * mesh.vertices[tri[1]] +
                                    bary[2] * mesh.vertices[tri[2]];
        const double d2 = (pos - query).squaredNorm();
        if (d2 < best_d2)
        {
            best_d2 = d2;
            best.point.triangle = t;
            best.point.barycentric = bary;
        }
    }
    best.distance = std::sqrt(best_d2);
    return best;
}

} // namespace core
} // namespace unibody
