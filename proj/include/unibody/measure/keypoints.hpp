/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/measure/keypoints.hpp
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

#include "unibody/core/point_cloud.hpp"

#include "Eigen/Core"
#include "Eigen/SparseCore"

#include "json.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace unibody {
namespace measure {

/**
 * Fixed keypoint id vocabulary: 21 body joints, 6 foot landmarks, 21 points
 * per hand, and 70 face points. Models bind (possibly a subset of) these ids
 * through their regressor rows; detectors may emit any subset.
 */
inline const std::vector<std::string>& keypoint_registry()
{
    static const std::vector<std::string> ids = [] {
        std::vector<std::string> v;
        for (const char* joint :
             {"pelvis", "spine", "chest", "neck", "head", "l_hip", "l_knee", "l_ankle", "l_foot",
              "r_hip", "r_knee", "r_ankle", "r_foot", "l_collar", "l_shoulder", "l_elbow",
              "l_wrist", "r_collar", "r_shoulder", "r_elbow", "r_wrist"})
            v.push_back(std::string("body_") + joint);
        for (const char* side : {"l", "r"})
            for (const char* mark : {"bigtoe_tip", "littletoe_tip", "ball"})
                v.push_back(std::string("foot_") + side + "_" + mark);
        for (const char* side : {"lhand", "rhand"})
        {
            v.push_back(std::string(side) + "_wrist");
            for (const char* finger : {"thumb", "index", "middle", "ring", "pinky"})
                for (const char* seg : {"1", "2", "3", "tip"})
                    v.push_back(std::string(side) + "_" + finger + "_" + seg);
        }
        for (int i = 0; i < 70; ++i)
        {
            char buf[16];
            std::snprintf(buf, sizeof(buf), "face_%02d", i);
            v.push_back(buf);
        }
        return v;
    }();
    return ids;
}

/// The four torso anchors used to bootstrap global rotation and translation.
inline const std::vector<std::string>& torso_keypoint_ids()
{
    static const std::vector<std::string> ids = {"body_l_shoulder", "body_r_shoulder",
                                                 "body_l_hip", "body_r_hip"};
    return ids;
}

inline bool is_registered_keypoint(const std::string& id)
{
    const auto& reg = keypoint_registry();
    return std::find(reg.begin(), reg.end(), id) != reg.end();
}

struct Detection2D
{
    std::string id;
    Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
    double confidence = 1.0; // in [0, 1]
    int view = 0;
};

struct Keypoint3D
{
    std::string id;
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    int support = 0; // number of contributing views
};

/**
 * Sparse rows mapping model vertices to predicted keypoint target positions.
 * Row k predicts keypoint ids[k]; rows are nonnegative, sum to one, and use
 * at most 20 vertices.
 */
struct KeypointRegressor
{
    Eigen::SparseMatrix<double, Eigen::RowMajor> rows; // C x N
    std::vector<std::string> ids;                      // one per row

    int num_keypoints() const { return static_cast<int>(rows.rows()); }

    int row_of(const std::string& id) const
    {
        for (std::size_t k = 0; k < ids.size(); ++k)
            if (ids[k] == id)
                return static_cast<int>(k);
        return -1;
    }

    /// Predicted positions J * V for all rows.
    std::vector<Eigen::Vector3d> predict(const std::vector<Eigen::Vector3d>& vertices) const
    {
        std::vector<Eigen::Vector3d> out(num_keypoints(), Eigen::Vector3d::Zero());
        for (int k = 0; k < num_keypoints(); ++k)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rows, k); it; ++it)
                out[k] += it.value() * vertices[it.col()];
        return out;
    }
};

inline void validate(const KeypointRegressor& regressor, int max_support = 20)
{
    if (static_cast<int>(regressor.ids.size()) != regressor.rows.rows())
        throw std::invalid_argument("KeypointRegressor: id count does not match row count");
    for (int k = 0; k < regressor.rows.rows(); ++k)
    {
        double sum = 0.0;
        int nnz = 0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(regressor.rows, k); it;
             ++it)
        {
            if (it.value() < 0.0)
                throw std::invalid_argument("KeypointRegressor: negative weight in row " +
                                            regressor.ids[k]);
            sum += it.value();
            ++nnz;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument("KeypointRegressor: row " + regressor.ids[k] +
                                        " does not sum to 1");
        if (nnz > max_support)
            throw std::invalid_argument("KeypointRegressor: row " + regressor.ids[k] +
                                        " uses more than " + std::to_string(max_support) +
                                        " vertices");
    }
}

/// One frame of fitter input: corresponded keypoints plus an uncorresponded
/// oriented point cloud, with an optional per-frame ICP exclusion mask.
struct MeasurementFrame
{
    int frame = 0;
    std::vector<Keypoint3D> keypoints;
    core::OrientedPointCloud cloud;
    std::optional<std::vector<int>> icp_mask; // overrides the model's default when set

    const Keypoint3D* find(const std::string& id) const
    {
        for (const auto& k : keypoints)
            if (k.id == id)
                return &k;
        return nullptr;
    }
};

inline void validate(const MeasurementFrame& frame)
{
    std::set<std::string> seen;
    for (const auto& k : frame.keypoints)
        if (!seen.insert(k.id).second)
            throw std::invalid_argument("MeasurementFrame: duplicate keypoint id " + k.id);
    if (!frame.cloud.empty())
        validate(frame.cloud);
}

// --- file formats -----------------------------------------------------------

inline nlohmann::json keypoints_to_json(int frame, const std::vector<Keypoint3D>& points)
{
    nlohmann::json j;
    j["frame"] = frame;
    j["points"] = nlohmann::json::array();
    for (const auto& p : points)
        j["points"].push_back({{"id", p.id},
                               {"x", p.position.x()},
                               {"y", p.position.y()},
                               {"z", p.position.z()},
                               {"support", p.support}});
    return j;
}

inline std::vector<Keypoint3D> keypoints_from_json(const nlohmann::json& j)
{
    std::vector<Keypoint3D> points;
    for (const auto& p : j.at("points"))
    {
        Keypoint3D k;
        k.id = p.at("id").get<std::string>();
        k.position = {p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>()};
        k.support = p.value("support", 2);
        points.push_back(k);
    }
    return points;
}

/// One frame per line: {"frame": f, "points": [...]}. A single plain JSON
/// object (no trailing lines) is accepted too.
inline std::map<int, std::vector<Keypoint3D>> load_keypoint_frames(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open for reading: " + path);
    std::map<int, std::vector<Keypoint3D>> frames;
    std::string line;
    while (std::getline(in, line))
    {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        frames[j.at("frame").get<int>()] = keypoints_from_json(j);
    }
    return frames;
}

inline void save_keypoint_frames(const std::map<int, std::vector<Keypoint3D>>& frames,
                                 const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& [frame, points] : frames)
        out << keypoints_to_json(frame, points).dump() << '\n';
}

/// Detections are stored one frame+view per line:
/// {"frame": f, "view": v, "keypoints": [{"id", "u", "v", "conf"}]}.
inline std::map<int, std::vector<Detection2D>> load_detections(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open for reading: " + path);
    std::map<int, std::vector<Detection2D>> frames;
    std::string line;
    while (std::getline(in, line))
    {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        const nlohmann::json j = nlohmann::json::parse(line);
        const int frame = j.at("frame").get<int>();
        const int view = j.at("view").get<int>();
        for (const auto& k : j.at("keypoints"))
        {
            Detection2D d;
            d.id = k.at("id").get<std::string>();
            d.pixel = {k.at("u").get<double>(), k.at("v").get<double>()};
            d.confidence = k.at("conf").get<double>();
            d.view = view;
            if (d.confidence < 0.0 || d.confidence > 1.0)
                throw std::invalid_argument("Detection2D: confidence outside [0,1] in " + path);
            frames[frame].push_back(d);
        }
    }
    return frames;
}

inline void save_detections(const std::map<int, std::vector<Detection2D>>& frames,
                            const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& [frame, detections] : frames)
    {
        std::map<int, std::vector<const Detection2D*>> by_view;
        for (const auto& d : detections)
            by_view[d.view].push_back(&d);
        for (const auto& [view, list] : by_view)
        {
            nlohmann::json j;
            j["frame"] = frame;
            j["view"] = view;
            j["keypoints"] = nlohmann::json::array();
            for (const auto* d : list)
                j["keypoints"].push_back({{"id", d->id},
                                          {"u", d->pixel.x()},
                                          {"v", d->pixel.y()},
                                          {"conf", d->confidence}});
            out << j.dump() << '\n';
        }
    }
}

} // namespace measure
} // namespace unibody
