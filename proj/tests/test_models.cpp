/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: tests/test_models.cpp
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
#include "unibody/measure/regressor_build.hpp"
#include "unibody/models/archive.hpp"
#include "unibody/models/synthetic.hpp"

#include "catch_amalgamated.hpp"

#include <cstdio>
#include <random>

using namespace unibody;
using namespace unibody::models;

namespace {

const models::UnifiedModel& test_model()
{
    static const models::UnifiedModel model = [] {
        synth::SyntheticConfig config;
        config.seed = 11;
        return synth::make_synthetic_model(config);
    }();
    return model;
}

/// Independent reference for the posed body: explicit joint matrix chain and
/// a dense per-vertex sum of weighted transforms, written without the
/// library's FK/skinning path.
std::vector<Eigen::Vector3d> reference_body(const models::BodyModel& body,
                                            const Eigen::VectorXd& pose,
                                            const Eigen::VectorXd& shape,
                                            const Eigen::Vector3d& translation)
{
    const int n = body.num_vertices();
    const int joints = body.skeleton.num_joints();

    // Shaped rest vertices and regressed joint locations.
    std::vector<Eigen::Vector3d> rest(n);
    const Eigen::VectorXd disp = body.blendshapes * shape;
    for (int i = 0; i < n; ++i)
        rest[i] = body.mean.vertices[i] + disp.segment<3>(3 * i);
    Eigen::MatrixXd joint_pos = Eigen::MatrixXd::Zero(3, joints);
    for (int j = 0; j < joints; ++j)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(body.joint_regressor,
                                                                            j);
             it; ++it)
            joint_pos.col(j) += it.value() * rest[it.col()];

    // World chain and the rest-inverse composition.
    std::vector<Eigen::Matrix4d> world(joints);
    for (int j = 0; j < joints; ++j)
    {
        const int parent = body.skeleton.joints[j].parent;
        const Eigen::Vector3d offset =
            parent < 0 ? Eigen::Vector3d(joint_pos.col(j))
                       : Eigen::Vector3d(joint_pos.col(j) - joint_pos.col(parent));
        Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
        local.topLeftCorner<3, 3>() = kinematics::angle_axis_to_matrix(pose.segment<3>(3 * j));
        local.topRightCorner<3, 1>() = offset;
        if (parent < 0)
        {
            local.topRightCorner<3, 1>() += translation;
            world[j] = local;
        }
        else
            world[j] = world[parent] * local;
    }

    std::vector<Eigen::Vector3d> posed(n);
    for (int i = 0; i < n; ++i)
    {
        Eigen::Vector4d acc = Eigen::Vector4d::Zero();
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                 body.weights.matrix, i);
             it; ++it)
        {
            Eigen::Matrix4d rest_inv = Eigen::Matrix4d::Identity();
            rest_inv.topRightCorner<3, 1>() = -joint_pos.col(it.col());
            acc += it.value() * (world[it.col()] * rest_inv * rest[i].homogeneous());
        }
        posed[i] = acc.head<3>();
    }
    return posed;
}

} // namespace

TEST_CASE("synthetic model: construction sanity", "[synthetic]")
{
    const auto& model = test_model();
    CHECK(model.body.skeleton.num_joints() == 21);
    CHECK(model.left_hand.skeleton.num_joints() == 16);
    CHECK(model.right_hand.skeleton.num_joints() == 16);
    CHECK(model.num_vertices() <
          model.body.num_vertices() + model.face.num_vertices() +
              model.left_hand.num_vertices() + model.right_hand.num_vertices());
    CHECK(model.keypoints.num_keypoints() >
          21 + 6 + 2 * 21); // body + feet + hands, plus face points
    CHECK_FALSE(model.icp_mask.empty());
    CHECK_FALSE(model.seams.empty());

    // Blend rows are affine.
    for (int u = 0; u < model.num_vertices(); ++u)
    {
        double sum = 0.0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.blend, u); it;
             ++it)
        {
            sum += it.value();
            CHECK(it.value() >= 0.0);
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-9));
    }

    const auto layout = models::unified_layout(model);
    core::Mesh rest = assemble_unified(model, models::neutral_parameters(layout));
    const auto normals = core::compute_vertex_normals(rest);
    CHECK(normals.degenerate.empty());
}

TEST_CASE("body mesh: zero parameters give the mean, shape is linear", "[models]")
{
    const auto& body = test_model().body;
    const int jb = body.skeleton.num_joints();
    const Eigen::VectorXd zero_pose = Eigen::VectorXd::Zero(3 * jb);
    const int kb = body.num_shape_coefficients();

    const auto mean = body_mesh(body, zero_pose, Eigen::VectorXd::Zero(kb));
    for (int i = 0; i < body.num_vertices(); ++i)
        CHECK((mean.vertices[i] - body.mean.vertices[i]).norm() < 1e-12);

    // Unit coefficient reproduces mean + blendshape column exactly.
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(kb);
    e1[1] = 1.0;
    const auto shaped = body_mesh(body, zero_pose, e1);
    for (int i = 0; i < body.num_vertices(); ++i)
    {
        const Eigen::Vector3d expected =
            body.mean.vertices[i] + body.blendshapes.block<3, 1>(3 * i, 1);
        CHECK((shaped.vertices[i] - expected).norm() < 1e-12);
    }
}

TEST_CASE("body mesh matches the independent reference on random poses", "[models][oracle]")
{
    const auto& body = test_model().body;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 5; ++trial)
    {
        Eigen::VectorXd pose(3 * body.skeleton.num_joints());
        for (int i = 0; i < pose.size(); ++i)
            pose[i] = 0.2 * gauss(rng);
        Eigen::VectorXd shape(body.num_shape_coefficients());
        for (int i = 0; i < shape.size(); ++i)
            shape[i] = 0.5 * gauss(rng);
        const Eigen::Vector3d t(gauss(rng), gauss(rng), gauss(rng));

        const auto mesh = body_mesh(body, pose, shape, t);
        const auto expected = reference_body(body, pose, shape, t);
        for (int i = 0; i < body.num_vertices(); ++i)
            CHECK((mesh.vertices[i] - expected[i]).norm() < 1e-10);
    }
}

TEST_CASE("face mesh: coefficients and rigid transport", "[models]")
{
    const auto& model = test_model();
    const auto& face = model.face;
    const Eigen::VectorXd zid = Eigen::VectorXd::Zero(face.num_identity());
    const Eigen::VectorXd zex = Eigen::VectorXd::Zero(face.num_expression());
    const Eigen::Matrix4d identity = Eigen::Matrix4d::Identity();

    const auto mean = face_mesh(face, zid, zex, identity, identity);
    for (int i = 0; i < face.num_vertices(); ++i)
        CHECK((mean.vertices[i] - face.mean.vertices[i]).norm() < 1e-12);

    Eigen::VectorXd es = zex;
    es[2] = 1.0;
    const auto expressed = face_mesh(face, zid, es, identity, identity);
    for (int i = 0; i < face.num_vertices(); ++i)
    {
        const Eigen::Vector3d expected =
            face.mean.vertices[i] + face.expression_basis.block<3, 1>(3 * i, 2);
        CHECK((expressed.vertices[i] - expected).norm() < 1e-12);
    }

    // A pure head rotation rotates face vertices about the head joint.
    const auto layout = models::unified_layout(model);
    Eigen::VectorXd params = models::neutral_parameters(layout);
    const int head = model.face_attach.body_joint;
    const Eigen::Vector3d aa(0.4, -0.2, 0.3);
    layout.segment(params, "body_pose").segment(3 * head, 3) = aa;

    const auto state = evaluate_unified(model, params);
    const auto rest_state = evaluate_unified(model, models::neutral_parameters(layout));
    const Eigen::Matrix3d r = kinematics::angle_axis_to_matrix(aa);
    const Eigen::Vector3d head_pos = rest_state.body_fk.joint_positions[head];
    for (int i = 0; i < face.num_vertices(); ++i)
    {
        const Eigen::Vector3d before = rest_state.stacked[model.face_offset() + i];
        const Eigen::Vector3d after = state.stacked[model.face_offset() + i];
        CHECK((after - (r * (before - head_pos) + head_pos)).norm() < 1e-10);
    }
}

TEST_CASE("hand mesh: rest, uniform root scale, and weight locality", "[models]")
{
    const auto& hand = test_model().left_hand;
    const int jh = hand.skeleton.num_joints();
    const Eigen::VectorXd zero_pose = Eigen::VectorXd::Zero(3 * jh);
    Eigen::VectorXd unit_scales = Eigen::VectorXd::Ones(3 * hand.skeleton.num_scalable());
    const Eigen::Matrix4d identity = Eigen::Matrix4d::Identity();

    const auto rest = hand_mesh(hand, zero_pose, unit_scales, identity, identity);
    for (int i = 0; i < hand.num_vertices(); ++i)
        CHECK((rest.vertices[i] - hand.mesh.vertices[i]).norm() < 1e-12);

    // Uniform scale 2 on the root scales everything about the wrist (origin).
    Eigen::VectorXd scales = unit_scales;
    scales.segment<3>(0).setConstant(2.0);
    const auto scaled = hand_mesh(hand, zero_pose, scales, identity, identity);
    for (int i = 0; i < hand.num_vertices(); ++i)
        CHECK((scaled.vertices[i] - 2.0 * hand.mesh.vertices[i]).norm() < 1e-10);

    // Nonpositive scale is rejected.
    Eigen::VectorXd bad = unit_scales;
    bad[4] = 0.0;
    CHECK_THROWS_AS(hand_mesh(hand, zero_pose, bad, identity, identity), std::invalid_argument);

    // Curling one finger joint moves only vertices weighted to its subtree.
    const int joint = hand.skeleton.find("index_2");
    REQUIRE(joint > 0);
    Eigen::VectorXd pose = zero_pose;
    pose[3 * joint + 2] = M_PI / 2;
    const auto curled = hand_mesh(hand, pose, unit_scales, identity, identity);
    std::vector<bool> in_subtree(jh, false);
    in_subtree[joint] = true;
    for (int j = 0; j < jh; ++j)
        if (hand.skeleton.joints[j].parent >= 0 && in_subtree[hand.skeleton.joints[j].parent])
            in_subtree[j] = true;
    for (int i = 0; i < hand.num_vertices(); ++i)
    {
        double subtree_weight = 0.0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(hand.weights.matrix,
                                                                            i);
             it; ++it)
            if (in_subtree[it.col()])
                subtree_weight += it.value();
        const double moved = (curled.vertices[i] - hand.mesh.vertices[i]).norm();
        if (subtree_weight == 0.0)
            CHECK(moved < 1e-12);
    }
}

TEST_CASE("alignment transforms: rest calibration and shape displacement", "[models]")
{
    const auto& model = test_model();
    const int kb = model.body.num_shape_coefficients();

    const auto gamma0 =
        alignment_transform(model.body, model.face_attach, Eigen::VectorXd::Zero(kb));
    CHECK((gamma0 - model.face_attach.rest_alignment).cwiseAbs().maxCoeff() < 1e-12);

    // Shape moves the attachment by exactly the head joint displacement.
    Eigen::VectorXd shape = Eigen::VectorXd::Zero(kb);
    shape[0] = 0.7;
    const auto rest0 = shaped_rest_vertices(model.body.mean, model.body.blendshapes,
                                            Eigen::VectorXd::Zero(kb));
    const auto rest1 = shaped_rest_vertices(model.body.mean, model.body.blendshapes, shape);
    const Eigen::Vector3d d =
        regress_joints(model.body.joint_regressor, rest1)[model.face_attach.body_joint] -
        regress_joints(model.body.joint_regressor, rest0)[model.face_attach.body_joint];
    const auto gamma1 = alignment_transform(model.body, model.face_attach, shape);
    CHECK((gamma1.topRightCorner<3, 1>() - (gamma0.topRightCorner<3, 1>() + d)).norm() < 1e-12);

    const Eigen::Matrix3d rot = gamma1.topLeftCorner<3, 3>();
    CHECK((rot.transpose() * rot - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("unified assembly: copy rows, rest configuration, translation", "[models]")
{
    const auto& model = test_model();
    const auto layout = models::unified_layout(model);
    const Eigen::VectorXd neutral = models::neutral_parameters(layout);

    const auto state = evaluate_unified(model, neutral);
    int copy_rows = 0;
    for (int u = 0; u < model.num_vertices(); ++u)
    {
        Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.blend, u);
        if (it && it.value() == 1.0)
        {
            CHECK((state.vertices[u] - state.stacked[it.col()]).norm() == 0.0);
            ++copy_rows;
        }
    }
    CHECK(copy_rows > model.num_vertices() / 2);

    // Seam rows blend coincident rest vertices, so the rest mesh is exact.
    for (int u = 0; u < model.num_vertices(); ++u)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.blend, u); it;
             ++it)
            CHECK((state.vertices[u] - state.stacked[it.col()]).norm() < 1e-9);

    // Global translation shifts every vertex by exactly t.
    Eigen::VectorXd translated = neutral;
    const Eigen::Vector3d t(0.3, -0.1, 0.25);
    layout.segment(translated, "translation") = t;
    const auto moved = evaluate_unified(model, translated);
    for (int u = 0; u < model.num_vertices(); ++u)
        CHECK((moved.vertices[u] - (state.vertices[u] + t)).norm() < 1e-10);
}

TEST_CASE("unified forward functions are linear in shape at fixed pose", "[models][property]")
{
    const auto& model = test_model();
    const auto layout = models::unified_layout(model);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> gauss;

    Eigen::VectorXd base = models::neutral_parameters(layout);
    {
        auto pose = layout.segment(base, "body_pose");
        for (int i = 0; i < pose.size(); ++i)
            pose[i] = 0.15 * gauss(rng);
    }

    auto with_shape = [&](const Eigen::VectorXd& shape) {
        Eigen::VectorXd p = base;
        layout.segment(p, "body_shape") = shape;
        return evaluate_unified(model, p).vertices;
    };
    const int kb = model.body.num_shape_coefficients();
    Eigen::VectorXd a(kb), b(kb);
    for (int i = 0; i < kb; ++i)
    {
        a[i] = 0.4 * gauss(rng);
        b[i] = 0.4 * gauss(rng);
    }
    const auto va = with_shape(a);
    const auto vb = with_shape(b);
    const auto v0 = with_shape(Eigen::VectorXd::Zero(kb));
    const auto vab = with_shape(a + b);
    for (int u = 0; u < model.num_vertices(); ++u)
        CHECK((vab[u] - (va[u] + vb[u] - v0[u])).norm() < 1e-9);
}

TEST_CASE("seam constraints are satisfied at the calibrated rest pose", "[models]")
{
    const auto& model = test_model();
    const auto layout = models::unified_layout(model);
    const auto state = evaluate_unified(model, models::neutral_parameters(layout));

    for (const auto& seam : model.seams)
    {
        const auto& tri = model.body.mean.triangles[seam.anchor.triangle];
        Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
        for (int c = 0; c < 3; ++c)
            anchor += seam.anchor.barycentric[c] * state.stacked[tri[c]];
        CHECK((state.stacked[seam.part_vertex] - anchor).norm() < 1e-6);
    }
}

TEST_CASE("seams stay closed under pose and shape", "[models][property]")
{
    const auto& model = test_model();
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 3; ++trial)
    {
        const auto params = synth::sample_ground_truth(model, rng);
        const auto state = evaluate_unified(model, params);
        for (const auto& seam : model.seams)
        {
            const auto& tri = model.body.mean.triangles[seam.anchor.triangle];
            Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
            for (int c = 0; c < 3; ++c)
                anchor += seam.anchor.barycentric[c] * state.stacked[tri[c]];
            CHECK((state.stacked[seam.part_vertex] - anchor).norm() < 1e-6);
        }
    }
}

TEST_CASE("stitching rejects open boundary rings", "[models]")
{
    const auto& model = test_model();
    models::StitchAnnotations bad;
    bad.face.ring1 = {0}; // vertex 0 of the face part is interior
    bad.face.ring1_body = {0};
    std::vector<Eigen::Vector3d> rest(model.stacked_size(), Eigen::Vector3d::Zero());
    CHECK_THROWS_AS(models::build_stitching(model.body, model.face, model.left_hand,
                                            model.right_hand, bad, rest),
                    std::invalid_argument);
}

TEST_CASE("keypoint regressor builder: surface and ring anchors", "[measure]")
{
    const auto& mesh = test_model().body.mean;

    measure::KeypointAnchor vertex_anchor;
    vertex_anchor.id = "face_00";
    core::SurfacePoint sp;
    sp.triangle = 0;
    sp.barycentric = {1.0, 0.0, 0.0};
    vertex_anchor.anchor = sp;

    measure::KeypointAnchor centroid_anchor;
    centroid_anchor.id = "face_01";
    core::SurfacePoint sp2;
    sp2.triangle = 0;
    sp2.barycentric = Eigen::Vector3d::Constant(1.0 / 3);
    centroid_anchor.anchor = sp2;

    measure::KeypointAnchor ring_anchor;
    ring_anchor.id = "body_pelvis";
    std::vector<std::pair<int, double>> ring;
    for (int v = 0; v < 30; ++v)
        ring.emplace_back(v, 1.0 + (v % 3));
    ring_anchor.anchor = ring;

    const auto regressor = measure::build_keypoint_regressor(
        mesh, {vertex_anchor, centroid_anchor, ring_anchor});
    CHECK(regressor.num_keypoints() == 3);

    CHECK(regressor.rows.row(0).nonZeros() == 1);
    int entries = 0;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(regressor.rows, 1); it;
         ++it)
    {
        CHECK(it.value() == Catch::Approx(1.0 / 3));
        ++entries;
    }
    CHECK(entries == 3);
    CHECK(regressor.rows.row(2).nonZeros() == 20);

    // Prediction audit: J * rest reproduces the anchor positions.
    const auto predicted = regressor.predict(mesh.vertices);
    CHECK((predicted[0] - mesh.vertices[mesh.triangles[0][0]]).norm() < 1e-12);
}

TEST_CASE("model archive round trip", "[models][io]")
{
    const auto& model = test_model();
    models::ModelArchive archive;
    archive.unified = model;
    const std::string path = "test_model_archive.json";
    save_model(archive, path);
    const auto back = load_model(path);
    REQUIRE(back.unified.has_value());

    std::mt19937_64 rng(4);
    auto params = synth::sample_ground_truth(model, rng);
    const auto a = evaluate_unified(model, params).vertices;
    const auto b = evaluate_unified(*back.unified, params).vertices;
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK((a[i] - b[i]).norm() == 0.0);
    std::remove(path.c_str());
}
