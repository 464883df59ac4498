/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: tests/test_measure.cpp
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
#include "unibody/measure/camera.hpp"
#include "unibody/measure/keypoints.hpp"
#include "unibody/measure/rig.hpp"
#include "unibody/measure/triangulate.hpp"

#include "catch_amalgamated.hpp"

#include <cstdio>
#include <random>

using namespace unibody::measure;

TEST_CASE("keypoint registry covers the full vocabulary", "[keypoints]")
{
    const auto& reg = keypoint_registry();
    CHECK(reg.size() == 21 + 6 + 2 * 21 + 70);
    CHECK(is_registered_keypoint("body_pelvis"));
    CHECK(is_registered_keypoint("foot_l_bigtoe_tip"));
    CHECK(is_registered_keypoint("lhand_thumb_tip"));
    CHECK(is_registered_keypoint("face_69"));
    CHECK_FALSE(is_registered_keypoint("nose"));
    for (const auto& id : torso_keypoint_ids())
        CHECK(is_registered_keypoint(id));
}

TEST_CASE("camera decomposition and validation", "[camera]")
{
    const Camera cam = look_at_camera({2.0, 1.5, -1.0}, {0.0, 1.0, 0.0}, 1000.0, 1280, 720, 3);
    CHECK_NOTHROW(validate(cam));

    const auto dec = decompose(cam);
    CHECK((dec.rotation * dec.rotation.transpose() - Eigen::Matrix3d::Identity())
              .cwiseAbs()
              .maxCoeff() < 1e-9);
    CHECK(dec.intrinsics(0, 0) == Catch::Approx(1000.0));
    CHECK(dec.intrinsics(1, 1) == Catch::Approx(1000.0));
    CHECK((dec.center - Eigen::Vector3d(2.0, 1.5, -1.0)).norm() < 1e-9);

    // The camera center projects to no finite pixel; the target projects to
    // the image center.
    const auto px = project(cam, {0.0, 1.0, 0.0});
    REQUIRE(px.has_value());
    CHECK((*px - Eigen::Vector2d(640, 360)).norm() < 1e-9);
    CHECK_FALSE(project(cam, {4.0, 2.0, -2.0}).has_value()); // behind the camera
}

TEST_CASE("camera json round trip", "[camera][io]")
{
    const auto rig = make_circular_rig(4, {0, 1, 0}, 3.0, 1000.0, 640, 480);
    const std::string path = "test_cameras.json";
    save_cameras(rig, path);
    const auto back = load_cameras(path);
    REQUIRE(back.size() == rig.size());
    for (std::size_t i = 0; i < rig.size(); ++i)
    {
        CHECK(back[i].view == rig[i].view);
        CHECK((back[i].projection - rig[i].projection).cwiseAbs().maxCoeff() == 0.0);
    }
    std::remove(path.c_str());
}

TEST_CASE("triangulation: exact two-view recovery", "[triangulate]")
{
    const auto rig = make_circular_rig(2, {0, 1, 0}, 3.0, 1000.0, 1920, 1080);
    const Eigen::Vector3d point(0.12, 1.37, -0.21);
    std::vector<Detection2D> obs;
    for (const auto& cam : rig)
    {
        Detection2D d;
        d.id = "body_head";
        d.pixel = *project(cam, point);
        d.confidence = 0.9;
        d.view = cam.view;
        obs.push_back(d);
    }
    const auto result = triangulate(obs, rig);
    REQUIRE(result.has_value());
    CHECK((result->position - point).norm() < 1e-9);
    CHECK(result->support == 2);
}

TEST_CASE("triangulation: single view and low confidence yield nothing", "[triangulate]")
{
    const auto rig = make_circular_rig(2, {0, 1, 0}, 3.0, 1000.0, 1920, 1080);
    Detection2D d;
    d.id = "body_head";
    d.pixel = {960, 540};
    d.confidence = 0.9;
    d.view = 0;
    CHECK_FALSE(triangulate({d}, rig).has_value());

    Detection2D weak = d;
    weak.view = 1;
    weak.confidence = 0.1; // below the 0.3 default threshold
    CHECK_FALSE(triangulate({d, weak}, rig).has_value());
}

TEST_CASE("triangulation: parallel rays are degenerate", "[triangulate]")
{
    // Two identical cameras: every ray pair is parallel.
    const Camera cam = look_at_camera({0, 1, -3}, {0, 1, 0}, 1000.0, 1920, 1080, 0);
    Camera cam2 = cam;
    cam2.view = 1;
    Detection2D a, b;
    a.id = b.id = "body_head";
    a.pixel = b.pixel = {960, 540};
    a.view = 0;
    b.view = 1;
    CHECK_FALSE(triangulate({a, b}, {cam, cam2}).has_value());
}

TEST_CASE("triangulation: one-pixel noise at 3m stays under 2cm", "[triangulate][montecarlo]")
{
    const auto rig = make_circular_rig(10, {0, 1, 0}, 3.0, 1000.0, 1920, 1080);
    std::mt19937_64 rng(20260810);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> offset(-0.5, 0.5);

    int within = 0;
    const int trials = 500;
    for (int t = 0; t < trials; ++t)
    {
        const Eigen::Vector3d point(offset(rng), 1.0 + offset(rng), offset(rng));
        std::vector<Detection2D> obs;
        for (const auto& cam : rig)
        {
            const auto px = project(cam, point);
            if (!px)
                continue;
            Detection2D d;
            d.id = "body_head";
            d.pixel = *px + Eigen::Vector2d(noise(rng), noise(rng));
            d.confidence = 1.0;
            d.view = cam.view;
            obs.push_back(d);
        }
        const auto result = triangulate(obs, rig);
        REQUIRE(result.has_value());
        if ((result->position - point).norm() < 0.02)
            ++within;
    }
    CHECK(within >= static_cast<int>(0.95 * trials));
}

TEST_CASE("triangulation is projectively consistent", "[triangulate][property]")
{
    const auto rig = make_circular_rig(6, {0, 1, 0}, 2.5, 800.0, 1280, 720);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::uniform_real_distribution<double> offset(-0.4, 0.4);
    for (int t = 0; t < 50; ++t)
    {
        const Eigen::Vector3d point(offset(rng), 1.2 + offset(rng), offset(rng));
        std::vector<Detection2D> obs;
        for (const auto& cam : rig)
        {
            Detection2D d;
            d.id = "face_00";
            d.pixel = *project(cam, point) + Eigen::Vector2d(noise(rng), noise(rng));
            d.confidence = 1.0;
            d.view = cam.view;
            obs.push_back(d);
        }
        const auto result = triangulate(obs, rig);
        REQUIRE(result.has_value());
        for (const auto& d : obs)
        {
            const auto px = project(rig[d.view], result->position);
            REQUIRE(px.has_value());
            // Reprojection error bounded by a few noise sigmas.
            CHECK((*px - d.pixel).norm() < 5.0);
        }
    }
}

TEST_CASE("measurement frame validation and io round trips", "[keypoints][io]")
{
    MeasurementFrame frame;
    frame.frame = 3;
    frame.keypoints = {{"body_head", {0, 1.6, 0}, 4}, {"body_pelvis", {0, 1.0, 0}, 5}};
    CHECK_NOTHROW(validate(frame));
    frame.keypoints.push_back({"body_head", {0, 0, 0}, 2});
    CHECK_THROWS_AS(validate(frame), std::invalid_argument);
    frame.keypoints.pop_back();

    const std::string kp_path = "test_keypoints.jsonl";
    save_keypoint_frames({{3, frame.keypoints}}, kp_path);
    const auto kp_back = load_keypoint_frames(kp_path);
    REQUIRE(kp_back.count(3) == 1);
    CHECK(kp_back.at(3).size() == 2);
    CHECK(kp_back.at(3)[0].id == "body_head");
    CHECK((kp_back.at(3)[0].position - Eigen::Vector3d(0, 1.6, 0)).norm() == 0.0);
    std::remove(kp_path.c_str());

    std::map<int, std::vector<Detection2D>> detections;
    detections[0] = {{"body_head", {12.5, 34.25}, 0.75, 0}, {"body_head", {100, 200}, 0.5, 1}};
    const std::string det_path = "test_detections.jsonl";
    save_detections(detections, det_path);
    const auto det_back = load_detections(det_path);
    REQUIRE(det_back.count(0) == 1);
    REQUIRE(det_back.at(0).size() == 2);
    CHECK(det_back.at(0)[0].pixel.x() == 12.5);
    CHECK(det_back.at(0)[1].view == 1);
    std::remove(det_path.c_str());
}

TEST_CASE("keypoint regressor validation", "[keypoints]")
{
    KeypointRegressor reg;
    reg.rows.resize(1, 5);
    reg.rows.insert(0, 0) = 0.5;
    reg.rows.insert(0, 3) = 0.5;
    reg.ids = {"body_head"};
    CHECK_NOTHROW(validate(reg));

    reg.rows.coeffRef(0, 0) = 0.6; // breaks the sum-to-one constraint
    CHECK_THROWS_AS(validate(reg), std::invalid_argument);
}
