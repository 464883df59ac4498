/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/measure/synthesize.hpp
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
#include "unibody/measure/camera.hpp"
#include "unibody/measure/keypoints.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace unibody {
namespace measure {

/// Noise/dropout model for synthesized measurements. Drop rates can be
/// overridden per keypoint-id prefix (longest match wins).
struct NoiseSpec
{
    double keypoint_sigma = 0.0; // meters, isotropic on 3D keypoints
    double drop_rate = 0.0;      // probability a 3D keypoint goes missing
    std::map<std::string, double> drop_overrides;
    double cloud_sigma = 0.0; // meters, along the vertex normal
    int cloud_stride = 1;     // every k-th vertex becomes a cloud point
    double pixel_sigma = 0.0; // pixels, on 2D detections
    double detection_confidence = 0.9;
    std::uint64_t seed = 0;
};

struct SynthesizedFrame
{
    MeasurementFrame frame;
    std::vector<Detection2D> detections;
};

namespace detail {

inline double drop_rate_for(const NoiseSpec& noise, const std::string& id)
{
    double rate = noise.drop_rate;
    std::size_t best = 0;
    for (const auto& [prefix, r] : noise.drop_overrides)
        if (prefix.size() >= best && id.rfind(prefix, 0) == 0)
        {
            best = prefix.size();
            rate = r;
        }
    return rate;
}

} // namespace detail

/**
 * Fabricates one frame of measurements from an evaluated model surface:
 * 3D keypoints at the regressor targets (plus optional noise/dropout), a
 * point cloud of vertex samples displaced along their normals, and per-view
 * 2D detections of the noiseless targets. The random stream is a fixed
 * function of (seed, frame), so identical inputs give identical bytes.
 */
inline SynthesizedFrame synthesize_frame(const std::vector<Eigen::Vector3d>& vertices,
                                         const std::vector<Eigen::Vector3d>& normals,
                                         const KeypointRegressor& regressor,
                                         const std::vector<Camera>& cameras,
                                         const NoiseSpec& noise, int frame_index)
{
    if (vertices.size() != normals.size())
        throw std::invalid_argument("synthesize_frame: vertex/normal count mismatch");
    std::mt19937_64 rng(noise.seed * 0x9e3779b97f4a7c15ull + static_cast<std::uint64_t>(frame_index) + 1);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SynthesizedFrame out;
    out.frame.frame = frame_index;

    const auto targets = regressor.predict(vertices);
    for (int k = 0; k < regressor.num_keypoints(); ++k)
    {
        // Draw in a fixed order so dropout choices never shift the stream.
        const Eigen::Vector3d jitter(gauss(rng), gauss(rng), gauss(rng));
        const double drop_draw = unit(rng);

        int support = 0;
        for (const auto& cam : cameras)
            if (const auto px = project(cam, targets[k]); px && in_image(cam, *px))
                ++support;
        if (support < 2 || drop_draw < detail::drop_rate_for(noise, regressor.ids[k]))
            continue;

        Keypoint3D kp;
        kp.id = regressor.ids[k];
        kp.position = targets[k] + noise.keypoint_sigma * jitter;
        kp.support = support;
        out.frame.keypoints.push_back(kp);

        for (const auto& cam : cameras)
        {
            const auto px = project(cam, targets[k]);
            if (!px || !in_image(cam, *px))
                continue;
            Detection2D d;
            d.id = kp.id;
            d.pixel = *px + noise.pixel_sigma * Eigen::Vector2d(gauss(rng), gauss(rng));
            d.confidence = noise.detection_confidence;
            d.view = cam.view;
            out.detections.push_back(d);
        }
    }

    const int stride = std::max(1, noise.cloud_stride);
    for (std::size_t i = 0; i < vertices.size(); i += stride)
    {
        const double along = noise.cloud_sigma * gauss(rng);
        if (normals[i].norm() == 0.0)
            continue; // degenerate vertex, no reliable normal
        out.frame.cloud.points.push_back(vertices[i] + along * normals[i]);
        out.frame.cloud.normals.push_back(normals[i]);
    }

    validate(out.frame);
    return out;
}

} // namespace measure
} // namespace unibody
