/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/models/unified.hpp
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
#include "unibody/fit/parameter_blocks.hpp"
#include "unibody/measure/keypoints.hpp"
#include "unibody/models/part_models.hpp"

#include "Eigen/Core"
#include "Eigen/SparseCore"

#include <map>
#include <set>
#include <stdexcept>
#include <vector>

namespace unibody {
namespace models {

/// Ties a part-boundary ring vertex (stacked part index) to its closest
/// rest-pose point on the body surface.
struct SeamConstraint
{
    int part_vertex = -1; // index into the stacked part vertex vector
    core::SurfacePoint anchor;
    double weight = 1.0;
};

/**
 * The stitched whole-body model: body, face, and two hand part models glued
 * by a sparse blend matrix over the stacked part vertices, plus the seam
 * constraints and measurement bindings.
 */
struct UnifiedModel
{
    BodyModel body;
    FaceModel face;
    HandModel left_hand;
    HandModel right_hand;
    PartAttachment face_attach;
    PartAttachment left_hand_attach;
    PartAttachment right_hand_attach;

    Eigen::SparseMatrix<double, Eigen::RowMajor> blend; // N_U x (N_B + N_F + 2 N_H)
    std::vector<std::array<int, 3>> triangles;          // unified topology
    std::vector<int> redundant_body;                    // dropped body vertices
    std::vector<SeamConstraint> seams;

    measure::KeypointRegressor keypoints; // rows over unified vertices
    std::vector<int> icp_mask;            // unified vertices excluded from ICP by default

    int num_vertices() const { return static_cast<int>(blend.rows()); }
    int stacked_size() const { return static_cast<int>(blend.cols()); }

    int face_offset() const { return body.num_vertices(); }
    int left_hand_offset() const { return body.num_vertices() + face.num_vertices(); }
    int right_hand_offset() const
    {
        return body.num_vertices() + face.num_vertices() + left_hand.num_vertices();
    }
};

/// Parameter block layout for fitting the unified model.
inline fit::ParameterLayout unified_layout(const UnifiedModel& model)
{
    fit::ParameterLayout layout;
    layout.add("body_pose", 3 * model.body.skeleton.num_joints())
        .add("face_expression", model.face.num_expression())
        .add("left_hand_pose", 3 * model.left_hand.skeleton.num_joints())
        .add("right_hand_pose", 3 * model.right_hand.skeleton.num_joints())
        .add("body_shape", model.body.num_shape_coefficients())
        .add("face_identity", model.face.num_identity())
        .add("left_hand_scale", 3 * model.left_hand.skeleton.num_scalable())
        .add("right_hand_scale", 3 * model.right_hand.skeleton.num_scalable())
        .add("translation", 3);
    return layout;
}

/// Neutral parameters: zero pose/shape, unit scales.
inline Eigen::VectorXd neutral_parameters(const fit::ParameterLayout& layout)
{
    Eigen::VectorXd params = Eigen::VectorXd::Zero(layout.size());
    for (const auto& block : layout.blocks)
        if (block.name.find("scale") != std::string::npos)
            params.segment(block.offset, block.size).setOnes();
    return params;
}

/// Everything a forward evaluation produces; reused by residuals/jacobians.
struct UnifiedState
{
    Eigen::VectorXd params;
    std::vector<Eigen::Vector3d> body_rest; // shaped
    kinematics::FkResult body_fk;
    Eigen::Matrix4d face_anchor;          // T_head * Gamma_face
    Eigen::Matrix4d left_hand_anchor;     // T_wrist * Gamma_hand
    Eigen::Matrix4d right_hand_anchor;
    kinematics::FkResult left_hand_fk;
    kinematics::FkResult right_hand_fk;
    std::vector<Eigen::Vector3d> stacked; // body | face | left hand | right hand, world space
    std::vector<Eigen::Vector3d> vertices; // blended unified vertices
};

inline UnifiedState evaluate_unified(const UnifiedModel& model, const Eigen::VectorXd& params)
{
    const fit::ParameterLayout layout = unified_layout(model);
    if (params.size() != layout.size())
        throw std::invalid_argument("evaluate_unified: parameter vector size mismatch");

    UnifiedState state;
    state.params = params;
    const Eigen::VectorXd body_pose = layout.segment(params, "body_pose");
    const Eigen::VectorXd body_shape = layout.segment(params, "body_shape");
    const Eigen::Vector3d translation = layout.segment(params, "translation");

    state.body_rest = shaped_rest_vertices(model.body.mean, model.body.blendshapes, body_shape);
    const auto joints = regress_joints(model.body.joint_regressor, state.body_rest);
    const auto offsets = offsets_from_positions(model.body.skeleton, joints);
    state.body_fk = kinematics::forward_kinematics(model.body.skeleton, body_pose,
                                                   Eigen::VectorXd(), translation, &offsets);

    state.stacked.reserve(model.stacked_size());
    const auto body_posed =
        kinematics::skin_vertices(state.body_rest, model.body.weights, state.body_fk.rest_to_posed);
    state.stacked.insert(state.stacked.end(), body_posed.begin(), body_posed.end());

    // Face: expression + identity in the local frame, then head transform.
    const auto face_local = face_local_vertices(model.face, layout.segment(params, "face_identity"),
                                                layout.segment(params, "face_expression"));
    state.face_anchor = state.body_fk.rest_to_posed[model.face_attach.body_joint] *
                        alignment_transform(model.body, model.face_attach, body_shape);
    for (const auto& v : face_local)
        state.stacked.push_back(state.face_anchor.topLeftCorner<3, 3>() * v +
                                state.face_anchor.topRightCorner<3, 1>());

    // Hands: local LBS with bone scales, then wrist transform.
    const auto add_hand = [&](const HandModel& hand, const PartAttachment& attach,
                              const char* pose_block, const char* scale_block,
                              kinematics::FkResult& fk_out, Eigen::Matrix4d& anchor_out) {
        fk_out = kinematics::forward_kinematics(hand.skeleton, layout.segment(params, pose_block),
                                                layout.segment(params, scale_block));
        anchor_out = state.body_fk.rest_to_posed[attach.body_joint] *
                     alignment_transform(model.body, attach, body_shape);
        const auto local =
            kinematics::skin_vertices(hand.mesh.vertices, hand.weights, fk_out.rest_to_posed);
        for (const auto& v : local)
            state.stacked.push_back(anchor_out.topLeftCorner<3, 3>() * v +
                                    anchor_out.topRightCorner<3, 1>());
    };
    add_hand(model.left_hand, model.left_hand_attach, "left_hand_pose", "left_hand_scale",
             state.left_hand_fk, state.left_hand_anchor);
    add_hand(model.right_hand, model.right_hand_attach, "right_hand_pose", "right_hand_scale",
             state.right_hand_fk, state.right_hand_anchor);

    // Blend the stacked part vertices into the seamless mesh.
    state.vertices.assign(model.num_vertices(), Eigen::Vector3d::Zero());
    for (int u = 0; u < model.num_vertices(); ++u)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.blend, u); it;
             ++it)
            state.vertices[u] += it.value() * state.stacked[it.col()];
    return state;
}

/// Full forward pass to a seamless mesh.
inline core::Mesh assemble_unified(const UnifiedModel& model, const Eigen::VectorXd& params)
{
    core::Mesh mesh;
    mesh.vertices = evaluate_unified(model, params).vertices;
    mesh.triangles = model.triangles;
    return mesh;
}

// --- stitching construction --------------------------------------------------

/// Boundary correspondence for one part: the outermost two vertex rings and
/// the body vertices they replace, plus the rest of the redundant region.
struct PartStitch
{
    std::vector<int> ring1;      // part indices, outermost boundary
    std::vector<int> ring2;      // part indices, one ring inward
    std::vector<int> ring1_body; // body counterparts, same order
    std::vector<int> ring2_body;
    std::vector<int> redundant_body; // all body vertices this part replaces (incl. rings)
};

struct StitchAnnotations
{
    PartStitch face;
    PartStitch left_hand;
    PartStitch right_hand;
    double seam_search_radius = 0.02; // audit bound on anchor distance, meters
};

struct StitchingResult
{
    Eigen::SparseMatrix<double, Eigen::RowMajor> blend;
    std::vector<std::array<int, 3>> triangles;
    std::vector<int> redundant_body;
    std::vector<SeamConstraint> seams;
    /// body vertex -> unified index; ring vertices resolve to their part
    /// counterpart, interior redundant vertices to -1.
    std::vector<int> body_to_unified;
    /// stacked part vertex -> unified index (body columns as above).
    std::vector<int> stacked_to_unified;
};

namespace detail {

/// Vertices on a topological boundary: incident to an edge used by exactly
/// one triangle.
inline std::set<int> boundary_vertices(const core::Mesh& mesh)
{
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : mesh.triangles)
        for (int c = 0; c < 3; ++c)
        {
            const auto e = std::minmax(t[c], t[(c + 1) % 3]);
            ++edge_count[e];
        }
    std::set<int> boundary;
    for (const auto& [edge, count] : edge_count)
        if (count == 1)
        {
            boundary.insert(edge.first);
            boundary.insert(edge.second);
        }
    return boundary;
}

inline void check_ring(const PartStitch& stitch, const core::Mesh& part_mesh, const char* name)
{
    if (stitch.ring1.empty() || stitch.ring1.size() != stitch.ring1_body.size() ||
        stitch.ring2.size() != stitch.ring2_body.size())
        throw std::invalid_argument(std::string("build_stitching: ") + name +
                                    ": ring correspondence is open or ambiguous");
    const auto boundary = boundary_vertices(part_mesh);
    for (const int v : stitch.ring1)
        if (!boundary.count(v))
            throw std::invalid_argument(std::string("build_stitching: ") + name + ": vertex " +
                                        std::to_string(v) +
                                        " of the outer ring is not on the part boundary");
}

} // namespace detail

/**
 * Builds the blend matrix, unified topology, and seam constraint set from
 * per-part boundary correspondences. Copy rows everywhere except the two
 * boundary rings, which interpolate linearly toward the replaced body
 * vertices (1/2 then 3/4 part weight). Body triangles that referenced ring
 * vertices are re-indexed onto the part rings; triangles inside the
 * redundant regions are dropped.
 *
 * `part_rest_world` must hold the stacked rest-calibration vertex positions
 * (body frame) used to anchor the seams on the body rest surface.
 */
inline StitchingResult build_stitching(const BodyModel& body, const FaceModel& face,
                                       const HandModel& left_hand, const HandModel& right_hand,
                                       const StitchAnnotations& annotations,
                                       const std::vector<Eigen::Vector3d>& part_rest_world)
{
    const int nb = body.num_vertices();
    const int nf = face.num_vertices();
    const int nlh = left_hand.num_vertices();
    const int nrh = right_hand.num_vertices();
    const int stacked = nb + nf + nlh + nrh;
    if (static_cast<int>(part_rest_world.size()) != stacked)
        throw std::invalid_argument("build_stitching: stacked rest vertex count mismatch");

    detail::check_ring(annotations.face, face.mean, "face");
    detail::check_ring(annotations.left_hand, left_hand.mesh, "left_hand");
    detail::check_ring(annotations.right_hand, right_hand.mesh, "right_hand");

    struct PartRef
    {
        const PartStitch* stitch;
        int offset;
        int count;
        const std::vector<std::array<int, 3>>* triangles;
    };
    const std::vector<PartRef> parts = {
        {&annotations.face, nb, nf, &face.mean.triangles},
        {&annotations.left_hand, nb + nf, nlh, &left_hand.mesh.triangles},
        {&annotations.right_hand, nb + nf + nlh, nrh, &right_hand.mesh.triangles}};

    // Collect dropped body vertices and the ring remap (body -> stacked part
    // index).
    std::set<int> dropped;
    std::map<int, int> body_to_part; // ring vertices only
    for (const auto& part : parts)
    {
        for (const int v : part.stitch->redundant_body)
            dropped.insert(v);
        for (std::size_t k = 0; k < part.stitch->ring1.size(); ++k)
        {
            dropped.insert(part.stitch->ring1_body[k]);
            body_to_part[part.stitch->ring1_body[k]] = part.offset + part.stitch->ring1[k];
        }
        for (std::size_t k = 0; k < part.stitch->ring2.size(); ++k)
        {
            dropped.insert(part.stitch->ring2_body[k]);
            body_to_part[part.stitch->ring2_body[k]] = part.offset + part.stitch->ring2[k];
        }
    }

    StitchingResult result;
    result.redundant_body.assign(dropped.begin(), dropped.end());

    // Unified index maps.
    std::vector<int> body_unified(nb, -1);
    int cursor = 0;
    for (int v = 0; v < nb; ++v)
        if (!dropped.count(v))
            body_unified[v] = cursor++;
    std::vector<int> stacked_unified(stacked, -1);
    for (const auto& part : parts)
        for (int v = 0; v < part.count; ++v)
            stacked_unified[part.offset + v] = cursor++;
    const int num_unified = cursor;

    result.body_to_unified = body_unified;
    for (const auto& [body_vertex, part_index] : body_to_part)
        result.body_to_unified[body_vertex] = stacked_unified[part_index];
    result.stacked_to_unified = stacked_unified;
    for (int v = 0; v < nb; ++v)
        result.stacked_to_unified[v] = result.body_to_unified[v];

    // Blend rows.
    std::vector<Eigen::Triplet<double>> triplets;
    for (int v = 0; v < nb; ++v)
        if (body_unified[v] >= 0)
            triplets.emplace_back(body_unified[v], v, 1.0);
    for (const auto& part : parts)
    {
        std::map<int, double> ring_weight; // part-local index -> part weight
        std::map<int, int> ring_body;      // part-local index -> body column
        for (std::size_t k = 0; k < part.stitch->ring1.size(); ++k)
        {
            ring_weight[part.stitch->ring1[k]] = 0.5;
            ring_body[part.stitch->ring1[k]] = part.stitch->ring1_body[k];
        }
        for (std::size_t k = 0; k < part.stitch->ring2.size(); ++k)
        {
            ring_weight[part.stitch->ring2[k]] = 0.75;
            ring_body[part.stitch->ring2[k]] = part.stitch->ring2_body[k];
        }
        for (int v = 0; v < part.count; ++v)
        {
            const int row = stacked_unified[part.offset + v];
            const auto it = ring_weight.find(v);
            if (it == ring_weight.end())
            {
                triplets.emplace_back(row, part.offset + v, 1.0);
            }
            else
            {
                triplets.emplace_back(row, part.offset + v, it->second);
                triplets.emplace_back(row, ring_body.at(v), 1.0 - it->second);
            }
        }
    }
    result.blend.resize(num_unified, stacked);
    result.blend.setFromTriplets(triplets.begin(), triplets.end());

    // Unified topology: body triangles (ring vertices re-indexed onto parts,
    // fully redundant ones dropped), then part triangles.
    for (const auto& tri : body.mean.triangles)
    {
        std::array<int, 3> mapped{};
        bool keep = true;
        for (int c = 0; c < 3 && keep; ++c)
        {
            const int v = tri[c];
            if (body_unified[v] >= 0)
                mapped[c] = body_unified[v];
            else if (const auto it = body_to_part.find(v); it != body_to_part.end())
                mapped[c] = stacked_unified[it->second];
            else
                keep = false;
        }
        if (keep)
            result.triangles.push_back(mapped);
    }
    for (const auto& part : parts)
        for (const auto& tri : *part.triangles)
            result.triangles.push_back({stacked_unified[part.offset + tri[0]],
                                        stacked_unified[part.offset + tri[1]],
                                        stacked_unified[part.offset + tri[2]]});

    // Seam constraints: last two rings anchored on the body rest surface.
    for (const auto& part : parts)
    {
        const auto add_seam = [&](const std::vector<int>& ring, double weight) {
            for (const int v : ring)
            {
                const int stacked_index = part.offset + v;
                const auto projection =
                    core::barycentric_project(part_rest_world[stacked_index], body.mean);
                if (projection.distance > annotations.seam_search_radius)
                    throw std::invalid_argument(
                        "build_stitching: seam anchor lies " + std::to_string(projection.distance) +
                        " m from its ring vertex (allowed " +
                        std::to_string(annotations.seam_search_radius) + ")");
                result.seams.push_back({stacked_index, projection.point, weight});
            }
        };
        add_seam(part.stitch->ring1, 1.0);
        add_seam(part.stitch->ring2, 0.5);
    }
    return result;
}

} // namespace models
} // namespace unibody
