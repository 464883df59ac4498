/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/models/archive.hpp
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

#include "unibody/models/merged.hpp"
#include "unibody/models/unified.hpp"

#include "json.hpp"

#include <fstream>
#include <optional>
#include <string>

namespace unibody {
namespace models {

/**
 * One structured JSON document holding the stitched model, the merged model,
 * or both. Everything is inline (meshes, bases, sparse matrices as triplet
 * lists), which keeps archives diffable and language-neutral.
 */
struct ModelArchive
{
    std::optional<UnifiedModel> unified;
    std::optional<MergedModel> merged;
};

namespace archive_detail {

using nlohmann::json;

inline json sparse_to_json(const Eigen::SparseMatrix<double, Eigen::RowMajor>& m)
{
    json triplets = json::array();
    for (int r = 0; r < m.outerSize(); ++r)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(m, r); it; ++it)
            triplets.push_back({it.row(), it.col(), it.value()});
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"triplets", triplets}};
}

inline Eigen::SparseMatrix<double, Eigen::RowMajor> sparse_from_json(const json& j)
{
    Eigen::SparseMatrix<double, Eigen::RowMajor> m(j.at("rows").get<int>(),
                                                   j.at("cols").get<int>());
    std::vector<Eigen::Triplet<double>> triplets;
    for (const auto& t : j.at("triplets"))
        triplets.emplace_back(t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<double>());
    m.setFromTriplets(triplets.begin(), triplets.end());
    return m;
}

inline json dense_to_json(const Eigen::MatrixXd& m)
{
    json data = json::array();
    for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r)
            data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Eigen::MatrixXd dense_from_json(const json& j)
{
    Eigen::MatrixXd m(j.at("rows").get<int>(), j.at("cols").get<int>());
    const auto& data = j.at("data");
    if (static_cast<int>(data.size()) != m.size())
        throw std::invalid_argument("archive: dense matrix data size mismatch");
    int k = 0;
    for (int c = 0; c < m.cols(); ++c)
        for (int r = 0; r < m.rows(); ++r)
            m(r, c) = data[k++].get<double>();
    return m;
}

inline json mesh_to_json(const core::Mesh& mesh)
{
    json vertices = json::array();
    for (const auto& v : mesh.vertices)
        vertices.push_back({v.x(), v.y(), v.z()});
    json triangles = json::array();
    for (const auto& t : mesh.triangles)
        triangles.push_back({t[0], t[1], t[2]});
    return {{"vertices", vertices}, {"triangles", triangles}};
}

inline core::Mesh mesh_from_json(const json& j)
{
    core::Mesh mesh;
    for (const auto& v : j.at("vertices"))
        mesh.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>(),
                                 v.at(2).get<double>()});
    for (const auto& t : j.at("triangles"))
        mesh.triangles.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
    validate(mesh);
    return mesh;
}

inline json skeleton_to_json(const kinematics::Skeleton& skeleton)
{
    json joints = json::array();
    for (const auto& joint : skeleton.joints)
        joints.push_back(
            {{"name", joint.name},
             {"parent", joint.parent},
             {"offset", {joint.offset.x(), joint.offset.y(), joint.offset.z()}},
             {"rotation",
              joint.rotation == kinematics::RotationType::angle_axis ? "angle_axis" : "euler_xyz"},
             {"scalable", joint.scalable}});
    return {{"joints", joints}};
}

inline kinematics::Skeleton skeleton_from_json(const json& j)
{
    kinematics::Skeleton skeleton;
    for (const auto& joint_json : j.at("joints"))
    {
        kinematics::Joint joint;
        joint.name = joint_json.at("name").get<std::string>();
        joint.parent = joint_json.at("parent").get<int>();
        const auto& o = joint_json.at("offset");
        joint.offset = {o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()};
        const auto rot = joint_json.at("rotation").get<std::string>();
        if (rot == "angle_axis")
            joint.rotation = kinematics::RotationType::angle_axis;
        else if (rot == "euler_xyz")
            joint.rotation = kinematics::RotationType::euler_xyz;
        else
            throw std::invalid_argument("archive: unknown rotation parameterization " + rot);
        joint.scalable = joint_json.at("scalable").get<bool>();
        skeleton.joints.push_back(joint);
    }
    validate(skeleton);
    return skeleton;
}

inline json matrix4_to_json(const Eigen::Matrix4d& m)
{
    json out = json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            out.push_back(m(r, c));
    return out;
}

inline Eigen::Matrix4d matrix4_from_json(const json& j)
{
    Eigen::Matrix4d m;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            m(r, c) = j.at(4 * r + c).get<double>();
    return m;
}

inline json regressor_to_json(const measure::KeypointRegressor& regressor)
{
    return {{"ids", regressor.ids}, {"rows", sparse_to_json(regressor.rows)}};
}

inline measure::KeypointRegressor regressor_from_json(const json& j)
{
    measure::KeypointRegressor regressor;
    regressor.ids = j.at("ids").get<std::vector<std::string>>();
    regressor.rows = sparse_from_json(j.at("rows"));
    validate(regressor);
    return regressor;
}

inline json attachment_to_json(const PartAttachment& a)
{
    return {{"body_joint", a.body_joint}, {"rest_alignment", matrix4_to_json(a.rest_alignment)}};
}

inline PartAttachment attachment_from_json(const json& j)
{
    PartAttachment a;
    a.body_joint = j.at("body_joint").get<int>();
    a.rest_alignment = matrix4_from_json(j.at("rest_alignment"));
    return a;
}

inline json hand_to_json(const HandModel& hand)
{
    return {{"mesh", mesh_to_json(hand.mesh)},
            {"skeleton", skeleton_to_json(hand.skeleton)},
            {"weights", sparse_to_json(hand.weights.matrix)},
            {"joint_regressor", sparse_to_json(hand.joint_regressor)}};
}

inline HandModel hand_from_json(const json& j)
{
    HandModel hand;
    hand.mesh = mesh_from_json(j.at("mesh"));
    hand.skeleton = skeleton_from_json(j.at("skeleton"));
    hand.weights.matrix = sparse_from_json(j.at("weights"));
    hand.joint_regressor = sparse_from_json(j.at("joint_regressor"));
    validate(hand);
    return hand;
}

} // namespace archive_detail

inline nlohmann::json to_json(const UnifiedModel& model)
{
    using namespace archive_detail;
    json seams = json::array();
    for (const auto& seam : model.seams)
        seams.push_back({{"part_vertex", seam.part_vertex},
                         {"triangle", seam.anchor.triangle},
                         {"barycentric",
                          {seam.anchor.barycentric[0], seam.anchor.barycentric[1],
                           seam.anchor.barycentric[2]}},
                         {"weight", seam.weight}});
    json triangles = json::array();
    for (const auto& t : model.triangles)
        triangles.push_back({t[0], t[1], t[2]});
    return {{"body",
             {{"mean", mesh_to_json(model.body.mean)},
              {"blendshapes", dense_to_json(model.body.blendshapes)},
              {"skeleton", skeleton_to_json(model.body.skeleton)},
              {"weights", sparse_to_json(model.body.weights.matrix)},
              {"joint_regressor", sparse_to_json(model.body.joint_regressor)}}},
            {"face",
             {{"mean", mesh_to_json(model.face.mean)},
              {"identity_basis", dense_to_json(model.face.identity_basis)},
              {"expression_basis", dense_to_json(model.face.expression_basis)},
              {"attach", attachment_to_json(model.face_attach)}}},
            {"left_hand", hand_to_json(model.left_hand)},
            {"left_hand_attach", attachment_to_json(model.left_hand_attach)},
            {"right_hand", hand_to_json(model.right_hand)},
            {"right_hand_attach", attachment_to_json(model.right_hand_attach)},
            {"blend", sparse_to_json(model.blend)},
            {"triangles", triangles},
            {"redundant_body", model.redundant_body},
            {"seams", seams},
            {"keypoints", regressor_to_json(model.keypoints)},
            {"icp_mask", model.icp_mask}};
}

inline UnifiedModel unified_from_json(const nlohmann::json& j)
{
    using namespace archive_detail;
    UnifiedModel model;
    const auto& body = j.at("body");
    model.body.mean = mesh_from_json(body.at("mean"));
    model.body.blendshapes = dense_from_json(body.at("blendshapes"));
    model.body.skeleton = skeleton_from_json(body.at("skeleton"));
    model.body.weights.matrix = sparse_from_json(body.at("weights"));
    model.body.joint_regressor = sparse_from_json(body.at("joint_regressor"));

    const auto& face = j.at("face");
    model.face.mean = mesh_from_json(face.at("mean"));
    model.face.identity_basis = dense_from_json(face.at("identity_basis"));
    model.face.expression_basis = dense_from_json(face.at("expression_basis"));
    model.face_attach = attachment_from_json(face.at("attach"));

    model.left_hand = hand_from_json(j.at("left_hand"));
    model.left_hand_attach = attachment_from_json(j.at("left_hand_attach"));
    model.right_hand = hand_from_json(j.at("right_hand"));
    model.right_hand_attach = attachment_from_json(j.at("right_hand_attach"));

    model.blend = sparse_from_json(j.at("blend"));
    for (const auto& t : j.at("triangles"))
        model.triangles.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()});
    model.redundant_body = j.at("redundant_body").get<std::vector<int>>();
    for (const auto& s : j.at("seams"))
    {
        SeamConstraint seam;
        seam.part_vertex = s.at("part_vertex").get<int>();
        seam.anchor.triangle = s.at("triangle").get<int>();
        const auto& b = s.at("barycentric");
        seam.anchor.barycentric = {b.at(0).get<double>(), b.at(1).get<double>(),
                                   b.at(2).get<double>()};
        seam.weight = s.at("weight").get<double>();
        model.seams.push_back(seam);
    }
    model.keypoints = regressor_from_json(j.at("keypoints"));
    model.icp_mask = j.at("icp_mask").get<std::vector<int>>();

    validate(model.body);
    validate(model.face);
    validate(model.left_hand);
    validate(model.right_hand);
    return model;
}

inline nlohmann::json to_json(const MergedModel& model)
{
    using namespace archive_detail;
    return {{"mean", mesh_to_json(model.mean)},
            {"shape_basis", dense_to_json(model.shape_basis)},
            {"expression_basis", dense_to_json(model.expression_basis)},
            {"skeleton", skeleton_to_json(model.skeleton)},
            {"weights", sparse_to_json(model.weights.matrix)},
            {"joint_regressor", sparse_to_json(model.joint_regressor)},
            {"keypoints", regressor_to_json(model.keypoints)},
            {"icp_mask", model.icp_mask}};
}

inline MergedModel merged_from_json(const nlohmann::json& j)
{
    using namespace archive_detail;
    MergedModel model;
    model.mean = mesh_from_json(j.at("mean"));
    model.shape_basis = dense_from_json(j.at("shape_basis"));
    model.expression_basis = dense_from_json(j.at("expression_basis"));
    model.skeleton = skeleton_from_json(j.at("skeleton"));
    model.weights.matrix = sparse_from_json(j.at("weights"));
    model.joint_regressor = sparse_from_json(j.at("joint_regressor"));
    model.keypoints = regressor_from_json(j.at("keypoints"));
    model.icp_mask = j.at("icp_mask").get<std::vector<int>>();
    validate(model);
    return model;
}

inline void save_model(const ModelArchive& archive, const std::string& path)
{
    nlohmann::json j;
    j["format"] = "unibody-model";
    j["version"] = 1;
    if (archive.unified)
        j["unified"] = to_json(*archive.unified);
    if (archive.merged)
        j["merged"] = to_json(*archive.merged);
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot open for writing: " + path);
    out << j.dump() << '\n';
}

inline ModelArchive load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open for reading: " + path);
    nlohmann::json j;
    in >> j;
    if (j.value("format", "") != "unibody-model")
        throw std::runtime_error("not a unibody model archive: " + path);
    ModelArchive archive;
    if (j.contains("unified"))
        archive.unified = unified_from_json(j.at("unified"));
    if (j.contains("merged"))
        archive.merged = merged_from_json(j.at("merged"));
    return archive;
}

} // namespace models
} // namespace unibody
