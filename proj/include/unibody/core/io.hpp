/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/core/io.hpp
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
#include "unibody/core/point_cloud.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace unibody {
namespace core {

namespace detail {

/// Shortest decimal representation that round-trips a double; keeps text
/// outputs byte-stable across reruns.
inline std::string format_double(double value)
{
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    double parsed = 0.0;
    for (int precision = 1; precision < 17; ++precision)
    {
        char shorter[32];
        std::snprintf(shorter, sizeof(shorter), "%.*g", precision, value);
        std::sscanf(shorter, "%lf", &parsed);
        if (parsed == value)
            return shorter;
    }
    return buf;
}

inline std::ifstream open_input(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open for reading: " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path, bool binary = false)
{
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    return out;
}

} // namespace detail

/**
 * Wavefront OBJ subset: v, vn and triangular f lines with 1-based indices.
 * Faces may use "f a b c" or "f a//na b//nb c//nc"; texture coordinates are
 * not supported.
 */
inline Mesh read_obj(const std::string& path)
{
    auto in = detail::open_input(path);
    Mesh mesh;
    std::vector<Eigen::Vector3d> file_normals;
    std::string line;
    while (std::getline(in, line))
    {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v")
        {
            Eigen::Vector3d p;
            ls >> p.x() >> p.y() >> p.z();
            mesh.vertices.push_back(p);
        }
        else if (tag == "vn")
        {
            Eigen::Vector3d n;
            ls >> n.x() >> n.y() >> n.z();
            file_normals.push_back(n);
        }
        else if (tag == "f")
        {
            std::array<int, 3> tri{};
            for (int c = 0; c < 3; ++c)
            {
                std::string field;
                if (!(ls >> field))
                    throw std::runtime_error("OBJ: face with fewer than 3 vertices in " + path);
                tri[c] = std::stoi(field.substr(0, field.find('/'))) - 1;
            }
            std::string extra;
            if (ls >> extra)
                throw std::runtime_error("OBJ: only triangles are supported (" + path + ")");
            mesh.triangles.push_back(tri);
        }
    }
    if (file_normals.size() == mesh.vertices.size())
        mesh.normals = std::move(file_normals);
    validate(mesh);
    return mesh;
}

inline void write_obj(const Mesh& mesh, const std::string& path)
{
    auto out = detail::open_output(path);
    for (const auto& v : mesh.vertices)
        out << "v " << detail::format_double(v.x()) << ' ' << detail::format_double(v.y()) << ' '
            << detail::format_double(v.z()) << '\n';
    for (const auto& n : mesh.normals)
        out << "vn " << detail::format_double(n.x()) << ' ' << detail::format_double(n.y()) << ' '
            << detail::format_double(n.z()) << '\n';
    const bool with_normals = mesh.normals.size() == mesh.vertices.size();
    for (const auto& t : mesh.triangles)
    {
        out << 'f';
        for (int c = 0; c < 3; ++c)
        {
            out << ' ' << (t[c] + 1);
            if (with_normals)
                out << "//" << (t[c] + 1);
        }
        out << '\n';
    }
}

/// ASCII PLY with x y z nx ny nz vertex properties.
inline OrientedPointCloud read_ply(const std::string& path)
{
    auto in = detail::open_input(path);
    std::string line;
    std::getline(in, line);
    if (line != "ply")
        throw std::runtime_error("PLY: missing magic in " + path);
    int count = -1;
    while (std::getline(in, line) && line != "end_header")
    {
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format")
        {
            std::string fmt;
            ls >> fmt;
            if (fmt != "ascii")
                throw std::runtime_error("PLY: only ascii format is supported (" + path + ")");
        }
        else if (tag == "element")
        {
            std::string what;
            ls >> what;
            if (what == "vertex")
                ls >> count;
        }
    }
    if (count < 0)
        throw std::runtime_error("PLY: no vertex element in " + path);
    OrientedPointCloud cloud;
    cloud.points.reserve(count);
    cloud.normals.reserve(count);
    for (int i = 0; i < count; ++i)
    {
        Eigen::Vector3d p, n;
        if (!(in >> p.x() >> p.y() >> p.z() >> n.x() >> n.y() >> n.z()))
            throw std::runtime_error("PLY: truncated vertex data in " + path);
        cloud.points.push_back(p);
        cloud.normals.push_back(n);
    }
    validate(cloud);
    return cloud;
}

inline void write_ply(const OrientedPointCloud& cloud, const std::string& path)
{
    auto out = detail::open_output(path);
    out << "ply\nformat ascii 1.0\n";
    out << "element vertex " << cloud.size() << '\n';
    out << "property double x\nproperty double y\nproperty double z\n";
    out << "property double nx\nproperty double ny\nproperty double nz\n";
    out << "end_header\n";
    for (int i = 0; i < cloud.size(); ++i)
    {
        const auto& p = cloud.points[i];
        const auto& n = cloud.normals[i];
        out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
            << detail::format_double(p.z()) << ' ' << detail::format_double(n.x()) << ' '
            << detail::format_double(n.y()) << ' ' << detail::format_double(n.z()) << '\n';
    }
}

} // namespace core
} // namespace unibody
