/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: tests/test_fitting.cpp
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
#include "unibody/build/transfer.hpp"
#include "unibody/fit/fit_frame.hpp"
#include "unibody/measure/rig.hpp"
#include "unibody/measure/synthesize.hpp"
#include "unibody/models/synthetic.hpp"

#include "catch_amalgamated.hpp"

#include <random>

using namespace unibody;

namespace {

synth::SyntheticConfig tiny_config()
{
    synth::SyntheticConfig config;
    config.torso_rings = 4;
    config.torso_segments = 6;
    config.head_rings = 7;
    config.head_segments = 8;
    config.tube_segments = 4;
    config.body_shape_count = 3;
    config.face_identity_count = 3;
    config.face_expression_count = 3;
    config.seed = 5;
    return config;
}

const models::UnifiedModel& tiny_model()
{
    static const models::UnifiedModel model = synth::make_synthetic_model(tiny_config());
    return model;
}

const models::UnifiedModel& fit_model()
{
    static const models::UnifiedModel model = [] {
        synth::SyntheticConfig config;
        config.seed = 31;
        return synth::make_synthetic_model(config);
    }();
    return model;
}

/// Random but valid parameter state near the working range.
Eigen::VectorXd random_state(const fit::ParameterLayout& layout, std::mt19937_64& rng)
{
    std::normal_distribution<double> gauss;
    Eigen::VectorXd params(layout.size());
    for (const auto& block : layout.blocks)
        for (int i = 0; i < block.size; ++i)
        {
            const int p = block.offset + i;
            if (block.name.find("scale") != std::string::npos)
                params[p] = std::max(0.6, 1.0 + 0.1 * gauss(rng));
            else if (block.name == "translation")
                params[p] = 0.2 * gauss(rng);
            else
                params[p] = 0.15 * gauss(rng);
        }
    return params;
}

template <typename Problem>
double finite_difference_error(const Problem& problem, const Eigen::VectorXd& params,
                               double h = 1e-6)
{
    Eigen::VectorXd r0;
    Eigen::MatrixXd analytic;
    problem(params, r0, &analytic);

    Eigen::MatrixXd fd(analytic.rows(), analytic.cols());
    Eigen::VectorXd hi, lo;
    for (int p = 0; p < params.size(); ++p)
    {
        Eigen::VectorXd up = params, down = params;
        up[p] += h;
        down[p] -= h;
        problem(up, hi, nullptr);
        problem(down, lo, nullptr);
        fd.col(p) = (hi - lo) / (2 * h);
    }
    return (analytic - fd).norm() / std::max(1e-12, analytic.norm());
}

measure::SynthesizedFrame noiseless_frame(const models::UnifiedModel& model,
                                          const Eigen::VectorXd& params,
                                          const std::vector<measure::Camera>& cameras,
                                          int cloud_stride = 2)
{
    const auto state = evaluate_unified(model, params);
    core::Mesh posed;
    posed.vertices = state.vertices;
    posed.triangles = model.triangles;
    const auto normals = core::compute_vertex_normals(posed);
    measure::NoiseSpec noise;
    noise.cloud_stride = cloud_stride;
    return measure::synthesize_frame(state.vertices, normals.normals, model.keypoints, cameras,
                                     noise, 0);
}

double pose_rmse(const fit::ParameterLayout& layout, const Eigen::VectorXd& a,
                 const Eigen::VectorXd& b, std::initializer_list<const char*> blocks)
{
    double sum = 0.0;
    int count = 0;
    for (const char* name : blocks)
    {
        const auto& block = layout.block(name);
        sum += (a.segment(block.offset, block.size) - b.segment(block.offset, block.size))
                   .squaredNorm();
        count += block.size;
    }
    return std::sqrt(sum / count);
}

} // namespace

TEST_CASE("residual jacobians match finite differences", "[fitting][jacobian]")
{
    const auto& model = tiny_model();
    const fit::UnifiedAdapter adapter(model);
    fit::FitConfig config;
    std::mt19937_64 rng(71);

    const auto cameras = measure::make_circular_rig(4, {0, 1.2, 0}, 2.5, 800, 640, 480);
    const auto gt = synth::sample_ground_truth(model, rng);
    const auto frame = noiseless_frame(model, gt, cameras, 1);

    for (int trial = 0; trial < 3; ++trial)
    {
        const auto params = random_state(adapter.layout(), rng);

        // Keypoint block.
        {
            fit::detail::StageProblem<fit::UnifiedAdapter> problem(adapter, config);
            for (const auto& kp : frame.frame.keypoints)
                problem.keypoint_items.emplace_back(model.keypoints.row_of(kp.id), kp.position);
            CHECK(finite_difference_error(problem, params) < 1e-4);
        }
        // ICP block (correspondences fixed at the test state).
        {
            fit::detail::StageProblem<fit::UnifiedAdapter> problem(adapter, config);
            const auto state = adapter.evaluate(params);
            core::Mesh posed;
            posed.vertices = adapter.vertices(state);
            posed.triangles = adapter.triangles();
            const auto normals = core::compute_vertex_normals(posed);
            const core::PointCloudIndex index(frame.frame.cloud, config.icp_max_dist);
            for (int u = 0; u < adapter.num_vertices(); u += 3)
            {
                if (normals.normals[u].norm() == 0.0)
                    continue;
                const auto hit = index.closest_compatible_point(posed.vertices[u],
                                                                normals.normals[u], 0.2, 2.0);
                if (hit)
                    problem.icp_items.push_back(
                        {u, frame.frame.cloud.points[*hit], frame.frame.cloud.normals[*hit]});
            }
            REQUIRE_FALSE(problem.icp_items.empty());
            CHECK(finite_difference_error(problem, params) < 1e-4);
        }
        // Seam block.
        {
            fit::detail::StageProblem<fit::UnifiedAdapter> problem(adapter, config);
            problem.use_seams = true;
            CHECK(finite_difference_error(problem, params) < 1e-4);
        }
        // Prior block.
        {
            fit::detail::StageProblem<fit::UnifiedAdapter> problem(adapter, config);
            problem.prior_multiplier = 10.0;
            CHECK(finite_difference_error(problem, params) < 1e-4);
        }
        // Candidate block.
        {
            fit::detail::StageProblem<fit::UnifiedAdapter> problem(adapter, config);
            std::normal_distribution<double> gauss;
            for (int u = 0; u < adapter.num_vertices(); u += 7)
                problem.candidate_items.emplace_back(
                    u, Eigen::Vector3d(gauss(rng), 1.0 + gauss(rng), gauss(rng)));
            CHECK(finite_difference_error(problem, params) < 1e-4);
        }
    }
}

TEST_CASE("merged-model jacobians match finite differences", "[fitting][jacobian]")
{
    const auto& source = tiny_model();
    // A merged fixture: transfer skinning from the stitched model with a
    // small random shape basis.
    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss;
    core::Mesh mean =
        assemble_unified(source, models::neutral_parameters(models::unified_layout(source)));
    Eigen::MatrixXd basis(3 * source.num_vertices(), 4);
    for (int c = 0; c < basis.cols(); ++c)
        for (int r = 0; r < basis.rows(); ++r)
            basis(r, c) = 0.01 * gauss(rng);
    const auto merged = build::assemble_merged(source, mean, basis);
    const fit::MergedAdapter adapter(merged);
    fit::FitConfig config;

    for (int trial = 0; trial < 3; ++trial)
    {
        const auto params = random_state(adapter.layout(), rng);
        fit::detail::StageProblem<fit::MergedAdapter> problem(adapter, config);
        const auto state = adapter.evaluate(params);
        const auto targets = merged.keypoints.predict(adapter.vertices(state));
        for (int k = 0; k < merged.keypoints.num_keypoints(); k += 2)
            problem.keypoint_items.emplace_back(
                k, targets[k] + 0.01 * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)));
        for (int u = 0; u < adapter.num_vertices(); u += 9)
            problem.candidate_items.emplace_back(
                u, Eigen::Vector3d(gauss(rng), 1.0 + gauss(rng), gauss(rng)));
        CHECK(finite_difference_error(problem, params) < 1e-4);
    }
}

TEST_CASE("noiseless recovery from a perturbed init", "[fitting][recovery]")
{
    const auto& model = fit_model();
    const auto layout = models::unified_layout(model);
    std::mt19937_64 rng(2026);
    const auto cameras = measure::make_circular_rig(6, {0, 1.2, 0}, 2.8, 800, 640, 480);

    const auto gt = synth::sample_ground_truth(model, rng);
    const auto frame = noiseless_frame(model, gt, cameras);

    // Perturb: 0.1 rad per joint parameter, 5 cm translation.
    std::normal_distribution<double> gauss;
    Eigen::VectorXd init = gt;
    for (const char* block : {"body_pose", "left_hand_pose", "right_hand_pose"})
    {
        auto segment = layout.segment(init, block);
        for (int i = 0; i < segment.size(); ++i)
            segment[i] += 0.1 * (gauss(rng) > 0 ? 1.0 : -1.0);
    }
    {
        auto t = layout.segment(init, "translation");
        t[0] += 0.05;
        t[2] -= 0.05;
    }

    fit::FitConfig config;
    const auto result = fit_frame(model, frame.frame, config, init);

    CHECK(pose_rmse(layout, result.params, gt,
                    {"body_pose", "left_hand_pose", "right_hand_pose"}) < 1e-3);
    CHECK((layout.segment(result.params, "translation") - layout.segment(gt, "translation"))
              .norm() < 1e-4);
    CHECK(pose_rmse(layout, result.params, gt, {"body_shape", "face_identity"}) < 1e-2);

    // Bookkeeping identity: the reported total is the exact sum of terms.
    double sum = 0.0;
    for (const auto& [name, cost] : result.term_costs)
        sum += cost;
    CHECK(std::abs(result.total_cost - sum) <= 1e-9 * std::max(1.0, result.total_cost));

    // Seam gaps stay far below 5 mm on a clean fit.
    const auto state = evaluate_unified(model, result.params);
    double max_gap = 0.0;
    for (const auto& seam : model.seams)
    {
        const auto& tri = model.body.mean.triangles[seam.anchor.triangle];
        Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
        for (int c = 0; c < 3; ++c)
            anchor += seam.anchor.barycentric[c] * state.stacked[tri[c]];
        max_gap = std::max(max_gap, (state.stacked[seam.part_vertex] - anchor).norm());
    }
    CHECK(max_gap < 5e-3);

    // Determinism: the same inputs give bit-identical results.
    const auto again = fit_frame(model, frame.frame, config, init);
    CHECK((again.params - result.params).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("cold start bootstraps global rotation from the torso", "[fitting]")
{
    const auto& model = fit_model();
    const auto layout = models::unified_layout(model);
    std::mt19937_64 rng(77);
    const auto cameras = measure::make_circular_rig(6, {0, 1.2, 0}, 2.8, 800, 640, 480);

    synth::GroundTruthOptions options;
    options.root_yaw_range = 2.5; // force a large global rotation
    const auto gt = synth::sample_ground_truth(model, rng, options);
    const auto frame = noiseless_frame(model, gt, cameras);

    fit::FitConfig config;
    const auto result = fit_frame(model, frame.frame, config);
    CHECK(pose_rmse(layout, result.params, gt,
                    {"body_pose", "left_hand_pose", "right_hand_pose"}) < 1e-3);

    // Without torso keypoints a cold start must fail loudly.
    measure::MeasurementFrame stripped = frame.frame;
    stripped.keypoints.erase(
        std::remove_if(stripped.keypoints.begin(), stripped.keypoints.end(),
                       [](const measure::Keypoint3D& kp) {
                           for (const auto& id : measure::torso_keypoint_ids())
                               if (kp.id == id)
                                   return true;
                           return false;
                       }),
        stripped.keypoints.end());
    CHECK_THROWS_AS(fit_frame(model, stripped, config), std::runtime_error);
}

TEST_CASE("init at the truth is already optimal", "[fitting]")
{
    const auto& model = fit_model();
    std::mt19937_64 rng(3);
    const auto cameras = measure::make_circular_rig(6, {0, 1.2, 0}, 2.8, 800, 640, 480);
    const auto gt = synth::sample_ground_truth(model, rng);
    const auto frame = noiseless_frame(model, gt, cameras);

    fit::FitConfig config;
    const auto result = fit_frame(model, frame.frame, config, gt);
    // The keypoint part of the objective stays essentially zero; the only
    // motion comes from the tiny priors.
    CHECK(result.term_costs.at("keypoints") < 1e-10);
    CHECK((result.params - gt).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("dropping hand detections pulls hands to the prior, body unaffected",
          "[fitting][ablation]")
{
    const auto& model = fit_model();
    const auto layout = models::unified_layout(model);
    std::mt19937_64 rng(8);
    const auto cameras = measure::make_circular_rig(6, {0, 1.2, 0}, 2.8, 800, 640, 480);
    const auto gt = synth::sample_ground_truth(model, rng);

    const auto state = evaluate_unified(model, gt);
    core::Mesh posed;
    posed.vertices = state.vertices;
    posed.triangles = model.triangles;
    const auto normals = core::compute_vertex_normals(posed);

    measure::NoiseSpec noise;
    noise.cloud_stride = 2;
    const auto full = measure::synthesize_frame(state.vertices, normals.normals, model.keypoints,
                                                cameras, noise, 0);
    noise.drop_overrides = {{"lhand", 1.0}, {"rhand", 1.0}};
    const auto dropped = measure::synthesize_frame(state.vertices, normals.normals,
                                                   model.keypoints, cameras, noise, 0);
    for (const auto& kp : dropped.frame.keypoints)
    {
        CHECK(kp.id.rfind("lhand", 0) != 0);
        CHECK(kp.id.rfind("rhand", 0) != 0);
    }

    fit::FitConfig config;
    const auto fit_full = fit_frame(model, full.frame, config, gt);
    const auto fit_dropped = fit_frame(model, dropped.frame, config, gt);

    // With no hand detections the finger curls (truth ~0.25 rad) relax toward
    // the prior mean of zero.
    for (const char* block : {"left_hand_pose", "right_hand_pose"})
        CHECK(layout.segment(fit_dropped.params, block).cwiseAbs().maxCoeff() < 0.05);
    // Body pose stays put.
    CHECK(pose_rmse(layout, fit_dropped.params, fit_full.params, {"body_pose"}) < 1e-3);
}

TEST_CASE("keypoint residuals skip unknown ids with a warning", "[fitting]")
{
    const auto& model = fit_model();
    std::mt19937_64 rng(4);
    const auto cameras = measure::make_circular_rig(6, {0, 1.2, 0}, 2.8, 800, 640, 480);
    const auto gt = synth::sample_ground_truth(model, rng);
    auto frame = noiseless_frame(model, gt, cameras).frame;
    frame.keypoints.push_back({"face_69", {0, 0, 0}, 3}); // registered but unbound id

    fit::FitConfig config;
    const auto result = fit_frame(model, frame, config, gt);
    REQUIRE_FALSE(result.warnings.empty());
    CHECK(result.warnings.front().find("face_69") != std::string::npos);
}
