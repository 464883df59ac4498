/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/models/synthetic.hpp
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

#include "unibody/models/unified.hpp"

#include "Eigen/Dense"

#include <cmath>
#include <cstdint>
#include <iostream>
#include <random>
#include <set>
#include <vector>

namespace unibody {
namespace synth {

/**
 * Configuration for the procedural whole-body model family. The generated
 * models run the full pipeline without any licensed assets: ellipsoid torso
 * and head, tube limbs, an articulated five-finger hand per side, a face
 * patch carved from the head, and smooth random blendshape fields.
 */
struct SyntheticConfig
{
    int torso_rings = 7;
    int torso_segments = 10;
    int head_rings = 9;
    int head_segments = 12;
    int tube_segments = 8;

    int body_shape_count = 4;
    double body_shape_amplitude = 0.06; // meters of displacement per unit coefficient
    int face_identity_count = 6;
    double face_identity_amplitude = 0.05;
    int face_expression_count = 6;
    double face_expression_amplitude = 0.04;

    double seam_search_radius = 0.02;
    std::uint64_t seed = 1;
};

namespace detail {

using core::Mesh;

struct TubeInfo
{
    std::vector<std::vector<int>> rings; // per cross-section, in segment order
    int cap_start = -1;
    int cap_end = -1;
};

inline void tube_frame(const Eigen::Vector3d& axis, Eigen::Vector3d& u, Eigen::Vector3d& v)
{
    const Eigen::Vector3d ref =
        std::abs(axis.y()) < 0.9 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitX();
    u = (ref - ref.dot(axis) * axis).normalized();
    v = axis.cross(u);
}

/// Capped tube from p0 to p1 with `ring_count` cross-sections. Ring vertex
/// order is fixed by the axis-derived frame, so tubes that share an axis and
/// radius produce ring-by-ring corresponding vertices.
inline TubeInfo append_tube(Mesh& mesh, const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                            double radius, int ring_count, int segments, bool cap_start,
                            bool cap_end)
{
    const Eigen::Vector3d axis = (p1 - p0).normalized();
    Eigen::Vector3d u, v;
    tube_frame(axis, u, v);

    TubeInfo info;
    for (int r = 0; r < ring_count; ++r)
    {
        const Eigen::Vector3d center = p0 + (p1 - p0) * (static_cast<double>(r) / (ring_count - 1));
        std::vector<int> ring;
        for (int s = 0; s < segments; ++s)
        {
            const double theta = 2.0 * M_PI * s / segments;
            ring.push_back(mesh.num_vertices());
            mesh.vertices.push_back(center + radius * (std::cos(theta) * u + std::sin(theta) * v));
        }
        info.rings.push_back(ring);
    }
    for (int r = 0; r + 1 < ring_count; ++r)
        for (int s = 0; s < segments; ++s)
        {
            const int a = info.rings[r][s];
            const int b = info.rings[r][(s + 1) % segments];
            const int c = info.rings[r + 1][s];
            const int d = info.rings[r + 1][(s + 1) % segments];
            mesh.triangles.push_back({a, b, c});
            mesh.triangles.push_back({b, d, c});
        }
    if (cap_start)
    {
        info.cap_start = mesh.num_vertices();
        mesh.vertices.push_back(p0);
        for (int s = 0; s < segments; ++s)
            mesh.triangles.push_back(
                {info.rings.front()[(s + 1) % segments], info.rings.front()[s], info.cap_start});
    }
    if (cap_end)
    {
        info.cap_end = mesh.num_vertices();
        mesh.vertices.push_back(p1);
        for (int s = 0; s < segments; ++s)
            mesh.triangles.push_back(
                {info.rings.back()[s], info.rings.back()[(s + 1) % segments], info.cap_end});
    }
    return info;
}

/// UV sphere scaled to an ellipsoid; poles along +-y.
inline std::pair<int, int> append_ellipsoid(Mesh& mesh, const Eigen::Vector3d& center,
                                            const Eigen::Vector3d& radii, int rings, int segments)
{
    const int first = mesh.num_vertices();
    mesh.vertices.push_back(center + Eigen::Vector3d(0, radii.y(), 0)); // north pole
    std::vector<std::vector<int>> grid;
    for (int r = 1; r < rings; ++r)
    {
        const double phi = M_PI * r / rings;
        std::vector<int> row;
        for (int s = 0; s < segments; ++s)
        {
            const double theta = 2.0 * M_PI * s / segments;
            row.push_back(mesh.num_vertices());
            mesh.vertices.push_back(center +
                                    Eigen::Vector3d(radii.x() * std::sin(phi) * std::cos(theta),
                                                    radii.y() * std::cos(phi),
                                                    radii.z() * std::sin(phi) * std::sin(theta)));
        }
        grid.push_back(row);
    }
    const int south = mesh.num_vertices();
    mesh.vertices.push_back(center - Eigen::Vector3d(0, radii.y(), 0));

    for (int s = 0; s < segments; ++s)
        mesh.triangles.push_back({first, grid[0][(s + 1) % segments], grid[0][s]});
    for (std::size_t r = 0; r + 1 < grid.size(); ++r)
        for (int s = 0; s < segments; ++s)
        {
            const int a = grid[r][s];
            const int b = grid[r][(s + 1) % segments];
            const int c = grid[r + 1][s];
            const int d = grid[r + 1][(s + 1) % segments];
            mesh.triangles.push_back({a, b, c});
            mesh.triangles.push_back({b, d, c});
        }
    for (int s = 0; s < segments; ++s)
        mesh.triangles.push_back({grid.back()[s], grid.back()[(s + 1) % segments], south});
    return {first, mesh.num_vertices() - first};
}

/// Minimum-norm affine row reproducing `target` exactly from candidate
/// vertices: solve for weights with sum-to-one and position equality
/// constraints. Entries may be negative (joint regressors are affine, not
/// convex).
inline std::vector<std::pair<int, double>>
exact_affine_row(const std::vector<Eigen::Vector3d>& vertices, const std::vector<int>& candidates,
                 const Eigen::Vector3d& target)
{
    const int k = static_cast<int>(candidates.size());
    Eigen::MatrixXd a(4, k);
    for (int i = 0; i < k; ++i)
    {
        a.block<3, 1>(0, i) = vertices[candidates[i]];
        a(3, i) = 1.0;
    }
    Eigen::Vector4d b;
    b << target, 1.0;
    const Eigen::Matrix4d gram = a * a.transpose() + 1e-12 * Eigen::Matrix4d::Identity();
    const Eigen::VectorXd w = a.transpose() * gram.ldlt().solve(b);
    if ((a * w - b).norm() > 1e-9)
        throw std::runtime_error("exact_affine_row: candidate set cannot reproduce the target");
    std::vector<std::pair<int, double>> row;
    for (int i = 0; i < k; ++i)
        row.emplace_back(candidates[i], w[i]);
    return row;
}

/// Indices of the `count` vertices nearest to `target` among those allowed.
inline std::vector<int> nearest_vertices(const std::vector<Eigen::Vector3d>& vertices,
                                         const Eigen::Vector3d& target, int count,
                                         const std::vector<bool>* allowed = nullptr)
{
    std::vector<std::pair<double, int>> by_distance;
    for (std::size_t i = 0; i < vertices.size(); ++i)
    {
        if (allowed && !(*allowed)[i])
            continue;
        by_distance.emplace_back((vertices[i] - target).squaredNorm(), static_cast<int>(i));
    }
    std::sort(by_distance.begin(), by_distance.end());
    std::vector<int> out;
    for (int i = 0; i < count && i < static_cast<int>(by_distance.size()); ++i)
        out.push_back(by_distance[i].second);
    return out;
}

/// Distance from point to segment [a, b].
inline double segment_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                               const Eigen::Vector3d& b)
{
    const Eigen::Vector3d ab = b - a;
    const double t = std::clamp(ab.dot(p - a) / std::max(ab.squaredNorm(), 1e-12), 0.0, 1.0);
    return (a + t * ab - p).norm();
}

/**
 * Two-bone skinning weights: each vertex takes inverse-square-distance
 * weights on the two nearest bones. A bone is the segment from a joint to
 * each of its children (leaf joints degenerate to a point).
 */
inline kinematics::SkinningWeights
bone_distance_weights(const std::vector<Eigen::Vector3d>& vertices,
                      const kinematics::Skeleton& skeleton,
                      const std::vector<Eigen::Vector3d>& joint_positions)
{
    const int num_joints = skeleton.num_joints();
    std::vector<std::vector<int>> children(num_joints);
    for (int j = 0; j < num_joints; ++j)
        if (skeleton.joints[j].parent >= 0)
            children[skeleton.joints[j].parent].push_back(j);

    kinematics::SkinningWeights weights;
    weights.matrix.resize(static_cast<int>(vertices.size()), num_joints);
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t i = 0; i < vertices.size(); ++i)
    {
        std::vector<std::pair<double, int>> best;
        for (int j = 0; j < num_joints; ++j)
        {
            double d = (vertices[i] - joint_positions[j]).norm();
            for (const int c : children[j])
                d = std::min(d, segment_distance(vertices[i], joint_positions[j],
                                                 joint_positions[c]));
            best.emplace_back(d, j);
        }
        std::sort(best.begin(), best.end());
        const double d0 = best[0].first, d1 = best[1].first;
        double w0 = 1.0 / (d0 * d0 + 1e-6);
        double w1 = 1.0 / (d1 * d1 + 1e-6);
        // Keep a single influence when the runner-up is far.
        if (d1 > 2.5 * d0 + 0.02)
            w1 = 0.0;
        const double sum = w0 + w1;
        triplets.emplace_back(static_cast<int>(i), best[0].second, w0 / sum);
        if (w1 > 0.0)
            triplets.emplace_back(static_cast<int>(i), best[1].second, w1 / sum);
    }
    weights.matrix.setFromTriplets(triplets.begin(), triplets.end());
    return weights;
}

/// Smooth random displacement field: a sum of Gaussian bumps with random
/// centers, radii, and directions, evaluated per vertex.
struct SmoothField
{
    struct Bump
    {
        Eigen::Vector3d center;
        Eigen::Vector3d direction;
        double radius;
        double amplitude;
    };
    std::vector<Bump> bumps;

    Eigen::Vector3d operator()(const Eigen::Vector3d& p) const
    {
        Eigen::Vector3d d = Eigen::Vector3d::Zero();
        for (const auto& bump : bumps)
            d += bump.amplitude *
                 std::exp(-(p - bump.center).squaredNorm() / (2.0 * bump.radius * bump.radius)) *
                 bump.direction;
        return d;
    }
};

inline SmoothField random_field(std::mt19937_64& rng, const Eigen::Vector3d& lo,
                                const Eigen::Vector3d& hi, double amplitude)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss;
    SmoothField field;
    for (int m = 0; m < 4; ++m)
    {
        SmoothField::Bump bump;
        for (int c = 0; c < 3; ++c)
            bump.center[c] = lo[c] + (hi[c] - lo[c]) * unit(rng);
        bump.direction = Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)).normalized();
        bump.radius = 0.25 + 0.35 * unit(rng);
        bump.amplitude = amplitude * (0.5 + 0.5 * unit(rng));
        field.bumps.push_back(bump);
    }
    return field;
}

} // namespace detail

/// Extra bookkeeping the harness needs alongside the model itself.
struct SyntheticExtras
{
    std::vector<int> body_to_unified;    // from stitching
    std::vector<int> stacked_to_unified; // from stitching
};

/// Builds one synthetic model family instance (deterministic per config).
models::UnifiedModel make_synthetic_model(const SyntheticConfig& config,
                                          SyntheticExtras* extras = nullptr);

namespace detail {

struct HandBuild
{
    models::HandModel model;
    std::vector<int> ring1, ring2;   // palm opening rings (local indices)
    std::vector<int> tip_vertices;   // one per finger
    std::vector<std::string> finger_names;
};

/// Articulated hand in its local frame: wrist at the origin, fingers along
/// `direction` * x. The palm opening ring sits in the x=0 plane and matches
/// the forearm cross-section it replaces.
inline HandBuild build_hand(int segments, double wrist_radius, int direction)
{
    HandBuild hand;
    const double d = static_cast<double>(direction);
    const Eigen::Vector3d wrist(0, 0, 0);

    // Palm: a tube from the wrist opening to the knuckles, capped at the far
    // end only (the opening is closed by the forearm it attaches to).
    const auto palm = append_tube(hand.model.mesh, wrist, Eigen::Vector3d(d * 0.105, 0, 0),
                                  wrist_radius, 4, segments, false, true);
    hand.ring1 = palm.rings[0];
    hand.ring2 = palm.rings[1];

    // Five parallel fingers. Joints coincide with tube cross-sections so the
    // local joint regressor can reproduce them exactly.
    hand.finger_names = {"thumb", "index", "middle", "ring", "pinky"};
    const double spread[5] = {-0.036, -0.018, 0.0, 0.018, 0.036};
    const double bone = 0.085 / 3.0;
    std::vector<std::vector<Eigen::Vector3d>> finger_joints;
    for (int f = 0; f < 5; ++f)
    {
        const double z = spread[f];
        const Eigen::Vector3d base(d * 0.105, 0, z);
        const Eigen::Vector3d tip(d * (0.105 + 0.085), 0, z);
        const auto tube = append_tube(hand.model.mesh, base, tip, 0.008, 4, 4, false, true);
        hand.tip_vertices.push_back(tube.cap_end);
        finger_joints.push_back({base, base + Eigen::Vector3d(d * bone, 0, 0),
                                 base + Eigen::Vector3d(d * 2 * bone, 0, 0)});
    }

    // Skeleton: wrist root plus three joints per finger, all Euler with
    // per-bone scaling.
    kinematics::Skeleton& skel = hand.model.skeleton;
    kinematics::Joint root;
    root.name = "wrist";
    root.parent = -1;
    root.offset = wrist;
    root.rotation = kinematics::RotationType::euler_xyz;
    root.scalable = true;
    skel.joints.push_back(root);
    std::vector<Eigen::Vector3d> joint_positions = {wrist};
    for (int f = 0; f < 5; ++f)
        for (int s = 0; s < 3; ++s)
        {
            kinematics::Joint j;
            j.name = hand.finger_names[f] + "_" + std::to_string(s + 1);
            j.parent = s == 0 ? 0 : static_cast<int>(skel.joints.size()) - 1;
            j.offset = s == 0 ? finger_joints[f][0] : Eigen::Vector3d(d * bone, 0, 0);
            j.rotation = kinematics::RotationType::euler_xyz;
            j.scalable = true;
            skel.joints.push_back(j);
            joint_positions.push_back(finger_joints[f][s]);
        }
    validate(skel);

    hand.model.weights =
        bone_distance_weights(hand.model.mesh.vertices, skel, joint_positions);
    // The palm opening must move rigidly with the root: its two rings are the
    // seam rings, and any finger influence there would pull them off the
    // forearm they are stitched to.
    for (const int ring : {0, 1})
        for (const int v : ring == 0 ? hand.ring1 : hand.ring2)
        {
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator
                     it(hand.model.weights.matrix, v);
                 it; ++it)
                it.valueRef() = 0.0;
            hand.model.weights.matrix.coeffRef(v, 0) = 1.0;
        }
    hand.model.weights.matrix.prune(0.0);

    // Local joint regressor: exact affine rows over nearby hand vertices.
    std::vector<Eigen::Triplet<double>> triplets;
    for (int j = 0; j < skel.num_joints(); ++j)
    {
        for (int k = 8; k <= 24; k += 8)
        {
            const auto candidates =
                nearest_vertices(hand.model.mesh.vertices, joint_positions[j], k);
            try
            {
                for (const auto& [col, w] : exact_affine_row(hand.model.mesh.vertices, candidates,
                                                             joint_positions[j]))
                    triplets.emplace_back(j, col, w);
                break;
            }
            catch (const std::runtime_error&)
            {
                if (k == 24)
                    throw;
            }
        }
    }
    hand.model.joint_regressor.resize(skel.num_joints(), hand.model.num_vertices());
    hand.model.joint_regressor.setFromTriplets(triplets.begin(), triplets.end());
    return hand;
}

} // namespace detail

inline models::UnifiedModel make_synthetic_model(const SyntheticConfig& config,
                                                 SyntheticExtras* extras)
{
    using namespace detail;
    std::mt19937_64 rng(config.seed);

    models::UnifiedModel model;
    models::BodyModel& body = model.body;

    // --- body skeleton ------------------------------------------------------
    struct JointSpec
    {
        const char* name;
        int parent;
        Eigen::Vector3d position;
    };
    const std::vector<JointSpec> joint_specs = {
        {"pelvis", -1, {0, 1.00, 0}},      {"spine", 0, {0, 1.12, 0}},
        {"chest", 1, {0, 1.26, 0}},        {"neck", 2, {0, 1.47, 0}},
        {"head", 3, {0, 1.58, 0}},         {"l_hip", 0, {0.09, 0.98, 0}},
        {"l_knee", 5, {0.10, 0.55, 0}},    {"l_ankle", 6, {0.10, 0.12, 0}},
        {"l_foot", 7, {0.10, 0.06, 0.10}}, {"r_hip", 0, {-0.09, 0.98, 0}},
        {"r_knee", 9, {-0.10, 0.55, 0}},   {"r_ankle", 10, {-0.10, 0.12, 0}},
        {"r_foot", 11, {-0.10, 0.06, 0.10}}, {"l_collar", 2, {0.05, 1.42, 0}},
        {"l_shoulder", 13, {0.17, 1.42, 0}}, {"l_elbow", 14, {0.42, 1.42, 0}},
        {"l_wrist", 15, {0.66, 1.42, 0}},  {"r_collar", 2, {-0.05, 1.42, 0}},
        {"r_shoulder", 17, {-0.17, 1.42, 0}}, {"r_elbow", 18, {-0.42, 1.42, 0}},
        {"r_wrist", 19, {-0.66, 1.42, 0}}};
    std::vector<Eigen::Vector3d> joint_rest;
    for (const auto& spec : joint_specs)
    {
        kinematics::Joint j;
        j.name = spec.name;
        j.parent = spec.parent;
        j.offset = spec.parent < 0 ? spec.position : spec.position - joint_specs[spec.parent].position;
        j.rotation = kinematics::RotationType::angle_axis;
        body.skeleton.joints.push_back(j);
        joint_rest.push_back(spec.position);
    }
    validate(body.skeleton);
    const int head_joint = body.skeleton.find("head");
    const int l_wrist = body.skeleton.find("l_wrist");
    const int r_wrist = body.skeleton.find("r_wrist");

    // --- body mesh ----------------------------------------------------------
    Mesh& mesh = body.mean;
    const Eigen::Vector3d head_center(0, 1.66, 0);
    const double head_radius = 0.105;

    append_ellipsoid(mesh, {0, 1.21, 0}, {0.16, 0.24, 0.10}, config.torso_rings,
                     config.torso_segments);
    const auto head_range = append_ellipsoid(mesh, head_center, Eigen::Vector3d::Constant(head_radius),
                                             config.head_rings, config.head_segments);

    const int seg = config.tube_segments;
    struct Limb
    {
        detail::TubeInfo upper, lower;
    };
    auto add_arm = [&](int shoulder, int elbow, int wrist) {
        Limb limb;
        limb.upper = append_tube(mesh, joint_rest[shoulder], joint_rest[elbow], 0.045, 3, seg,
                                 true, false);
        limb.lower = append_tube(mesh, joint_rest[elbow], joint_rest[wrist], 0.04, 4, seg, false,
                                 false); // open at the wrist: the hand replaces it
        return limb;
    };
    auto add_leg = [&](int hip, int knee, int ankle, int foot) {
        append_tube(mesh, joint_rest[hip], joint_rest[knee], 0.06, 3, seg, true, false);
        append_tube(mesh, joint_rest[knee], joint_rest[ankle], 0.05, 4, seg, false, true);
        const Eigen::Vector3d toe = joint_rest[foot] + Eigen::Vector3d(0, -0.01, 0.08);
        return append_tube(mesh, joint_rest[ankle], toe, 0.045, 3, seg, false, true);
    };
    const Limb left_arm = add_arm(body.skeleton.find("l_shoulder"),
                                  body.skeleton.find("l_elbow"), l_wrist);
    const Limb right_arm = add_arm(body.skeleton.find("r_shoulder"),
                                   body.skeleton.find("r_elbow"), r_wrist);
    const auto left_foot_tube =
        add_leg(body.skeleton.find("l_hip"), body.skeleton.find("l_knee"),
                body.skeleton.find("l_ankle"), body.skeleton.find("l_foot"));
    const auto right_foot_tube =
        add_leg(body.skeleton.find("r_hip"), body.skeleton.find("r_knee"),
                body.skeleton.find("r_ankle"), body.skeleton.find("r_foot"));

    // Crude hand stubs beyond the wrists; these are the redundant regions the
    // articulated hands replace. The first stub ring matches the second palm
    // ring so both seam rings have body counterparts.
    auto add_stub = [&](const Eigen::Vector3d& wrist, int direction) {
        const Eigen::Vector3d dir(direction, 0, 0);
        return append_tube(mesh, wrist + 0.035 * dir, wrist + 0.14 * dir, 0.04, 3, seg, false,
                           true);
    };
    const auto left_stub = add_stub(joint_rest[l_wrist], 1);
    const auto right_stub = add_stub(joint_rest[r_wrist], -1);
    const int num_body_vertices = mesh.num_vertices();

    // --- face patch ---------------------------------------------------------
    // Front band of the head sphere, converted to a part in the head frame.
    std::vector<bool> in_patch(num_body_vertices, false);
    std::vector<int> patch; // body indices, in ascending order
    for (int v = head_range.first; v < head_range.first + head_range.second; ++v)
        if (mesh.vertices[v].z() - head_center.z() > 0.035 &&
            std::abs(mesh.vertices[v].y() - head_center.y()) < 0.8 * head_radius)
        {
            in_patch[v] = true;
            patch.push_back(v);
        }
    std::vector<int> patch_local(num_body_vertices, -1);
    for (std::size_t i = 0; i < patch.size(); ++i)
        patch_local[patch[i]] = static_cast<int>(i);

    // Adjacency-based boundary rings of the patch.
    std::vector<std::set<int>> neighbors(num_body_vertices);
    for (const auto& t : mesh.triangles)
        for (int c = 0; c < 3; ++c)
        {
            neighbors[t[c]].insert(t[(c + 1) % 3]);
            neighbors[t[c]].insert(t[(c + 2) % 3]);
        }
    std::vector<int> face_ring1_body, face_ring2_body;
    for (const int v : patch)
        for (const int n : neighbors[v])
            if (!in_patch[n])
            {
                face_ring1_body.push_back(v);
                break;
            }
    const std::set<int> ring1_set(face_ring1_body.begin(), face_ring1_body.end());
    for (const int v : patch)
    {
        if (ring1_set.count(v))
            continue;
        for (const int n : neighbors[v])
            if (ring1_set.count(n))
            {
                face_ring2_body.push_back(v);
                break;
            }
    }
    if (face_ring2_body.empty())
        throw std::runtime_error("make_synthetic_model: face patch is too small for two rings");

    models::FaceModel& face = model.face;
    for (const int v : patch)
        face.mean.vertices.push_back(mesh.vertices[v] - head_center);
    for (const auto& t : mesh.triangles)
        if (in_patch[t[0]] && in_patch[t[1]] && in_patch[t[2]])
            face.mean.triangles.push_back(
                {patch_local[t[0]], patch_local[t[1]], patch_local[t[2]]});

    // --- hands ---------------------------------------------------------------
    auto left_build = build_hand(seg, 0.04, 1);
    auto right_build = build_hand(seg, 0.04, -1);
    model.left_hand = std::move(left_build.model);
    model.right_hand = std::move(right_build.model);

    model.face_attach = {head_joint, Eigen::Matrix4d::Identity()};
    model.face_attach.rest_alignment.topRightCorner<3, 1>() = head_center;
    model.left_hand_attach = {l_wrist, Eigen::Matrix4d::Identity()};
    model.left_hand_attach.rest_alignment.topRightCorner<3, 1>() = joint_rest[l_wrist];
    model.right_hand_attach = {r_wrist, Eigen::Matrix4d::Identity()};
    model.right_hand_attach.rest_alignment.topRightCorner<3, 1>() = joint_rest[r_wrist];

    // --- body skinning, joint regressor, blendshapes -------------------------
    // Rigid zones: the whole head follows the head joint and each wrist
    // neighborhood (last forearm rings + stub) follows its wrist, both in
    // skinning and in the blendshape fields. Part attachments and seams then
    // stay exact under every shape coefficient and every body pose.
    std::vector<int> zone(num_body_vertices, -1); // -1 free, else joint index
    for (int v = head_range.first; v < head_range.first + head_range.second; ++v)
        zone[v] = head_joint;
    auto mark_wrist_zone = [&](const Limb& arm, const TubeInfo& stub, int wrist_joint) {
        for (const auto& ring : stub.rings)
            for (const int v : ring)
                zone[v] = wrist_joint;
        if (stub.cap_end >= 0)
            zone[stub.cap_end] = wrist_joint;
        const auto& rings = arm.lower.rings;
        for (std::size_t r = rings.size() >= 2 ? rings.size() - 2 : 0; r < rings.size(); ++r)
            for (const int v : rings[r])
                zone[v] = wrist_joint;
    };
    mark_wrist_zone(left_arm, left_stub, l_wrist);
    mark_wrist_zone(right_arm, right_stub, r_wrist);

    body.weights = bone_distance_weights(mesh.vertices, body.skeleton, joint_rest);
    for (int v = 0; v < num_body_vertices; ++v)
        if (zone[v] >= 0)
        {
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator
                     it(body.weights.matrix, v);
                 it; ++it)
                it.valueRef() = 0.0;
            body.weights.matrix.coeffRef(v, zone[v]) = 1.0;
        }
    body.weights.matrix.prune(0.0);

    body.blendshapes.resize(3 * num_body_vertices, config.body_shape_count);
    for (int k = 0; k < config.body_shape_count; ++k)
    {
        const auto field = random_field(rng, {-0.8, 0.0, -0.4}, {0.8, 1.8, 0.4},
                                        config.body_shape_amplitude);
        for (int v = 0; v < num_body_vertices; ++v)
        {
            const Eigen::Vector3d at =
                zone[v] < 0 ? mesh.vertices[v] : joint_rest[zone[v]];
            body.blendshapes.block<3, 1>(3 * v, k) = field(at);
        }
    }

    // Joint regressor support avoids vertices the stitching drops, except the
    // ring vertices that survive through their part counterparts.
    std::vector<bool> regressor_ok(num_body_vertices, true);
    for (const int v : patch)
        regressor_ok[v] = false;
    for (const int v : face_ring1_body)
        regressor_ok[v] = true;
    for (const int v : face_ring2_body)
        regressor_ok[v] = true;
    auto mark_stub = [&](const TubeInfo& stub) {
        for (std::size_t r = 1; r < stub.rings.size(); ++r)
            for (const int v : stub.rings[r])
                regressor_ok[v] = false;
        if (stub.cap_end >= 0)
            regressor_ok[stub.cap_end] = false;
    };
    mark_stub(left_stub);
    mark_stub(right_stub);

    std::vector<Eigen::Triplet<double>> jr_triplets;
    for (int j = 0; j < body.skeleton.num_joints(); ++j)
    {
        for (int k = 8; k <= 24; k += 8)
        {
            const auto candidates = nearest_vertices(mesh.vertices, joint_rest[j], k, &regressor_ok);
            try
            {
                for (const auto& [col, w] : exact_affine_row(mesh.vertices, candidates,
                                                             joint_rest[j]))
                    jr_triplets.emplace_back(j, col, w);
                break;
            }
            catch (const std::runtime_error&)
            {
                if (k == 24)
                    throw;
            }
        }
    }
    body.joint_regressor.resize(body.skeleton.num_joints(), num_body_vertices);
    body.joint_regressor.setFromTriplets(jr_triplets.begin(), jr_triplets.end());

    // --- face bases (fade to zero on the two seam rings) ---------------------
    const std::set<int> face_fixed = [&] {
        std::set<int> s;
        for (const int v : face_ring1_body)
            s.insert(patch_local[v]);
        for (const int v : face_ring2_body)
            s.insert(patch_local[v]);
        return s;
    }();
    auto build_face_basis = [&](int count, double amplitude) {
        Eigen::MatrixXd basis(3 * face.num_vertices(), count);
        for (int k = 0; k < count; ++k)
        {
            const auto field = random_field(rng, {-0.12, -0.12, 0.0}, {0.12, 0.12, 0.12},
                                            amplitude);
            for (int i = 0; i < face.num_vertices(); ++i)
                basis.block<3, 1>(3 * i, k) =
                    face_fixed.count(i) ? Eigen::Vector3d::Zero()
                                        : field(face.mean.vertices[i]);
        }
        return basis;
    };
    face.identity_basis = build_face_basis(config.face_identity_count,
                                           config.face_identity_amplitude);
    face.expression_basis = build_face_basis(config.face_expression_count,
                                             config.face_expression_amplitude);

    // --- stitching ------------------------------------------------------------
    models::StitchAnnotations annotations;
    annotations.seam_search_radius = config.seam_search_radius;
    for (const int v : patch)
        if (!ring1_set.count(v)) // rings are handled by the remap
            annotations.face.redundant_body.push_back(v);
    annotations.face.ring1_body = face_ring1_body;
    annotations.face.ring2_body = face_ring2_body;
    for (const int v : face_ring1_body)
        annotations.face.ring1.push_back(patch_local[v]);
    for (const int v : face_ring2_body)
        annotations.face.ring2.push_back(patch_local[v]);

    auto hand_annotation = [&](const Limb& arm, const TubeInfo& stub,
                               const detail::HandBuild& build) {
        models::PartStitch stitch;
        stitch.ring1 = build.ring1;
        stitch.ring2 = build.ring2;
        stitch.ring1_body = arm.lower.rings.back();
        stitch.ring2_body = stub.rings.front();
        for (std::size_t r = 1; r < stub.rings.size(); ++r)
            for (const int v : stub.rings[r])
                stitch.redundant_body.push_back(v);
        stitch.redundant_body.push_back(stub.cap_end);
        return stitch;
    };
    annotations.left_hand = hand_annotation(left_arm, left_stub, left_build);
    annotations.right_hand = hand_annotation(right_arm, right_stub, right_build);

    std::vector<Eigen::Vector3d> rest_world(mesh.vertices);
    for (const auto& v : face.mean.vertices)
        rest_world.push_back(v + head_center);
    for (const auto& v : model.left_hand.mesh.vertices)
        rest_world.push_back(v + joint_rest[l_wrist]);
    for (const auto& v : model.right_hand.mesh.vertices)
        rest_world.push_back(v + joint_rest[r_wrist]);

    auto stitching = models::build_stitching(body, face, model.left_hand, model.right_hand,
                                             annotations, rest_world);
    model.blend = std::move(stitching.blend);
    model.triangles = std::move(stitching.triangles);
    model.redundant_body = std::move(stitching.redundant_body);
    model.seams = std::move(stitching.seams);
    if (extras)
    {
        extras->body_to_unified = stitching.body_to_unified;
        extras->stacked_to_unified = stitching.stacked_to_unified;
    }

    // --- keypoint regressor -----------------------------------------------------
    const int nb = num_body_vertices;
    const int face_offset = model.face_offset();
    const int lh_offset = model.left_hand_offset();
    const int rh_offset = model.right_hand_offset();
    std::vector<Eigen::Triplet<double>> kp_triplets;
    std::vector<std::string> kp_ids;

    auto add_weight_row = [&](const std::string& id,
                              std::vector<std::pair<int, double>> entries) {
        // Top-20 by weight, renormalized.
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            return a.second > b.second || (a.second == b.second && a.first < b.first);
        });
        if (entries.size() > 20)
            entries.resize(20);
        double sum = 0.0;
        for (const auto& [col, w] : entries)
            sum += w;
        const int row = static_cast<int>(kp_ids.size());
        for (const auto& [col, w] : entries)
            kp_triplets.emplace_back(row, col, w / sum);
        kp_ids.push_back(id);
    };

    // Body joints: skinning-weighted ring averages, restricted to vertices
    // that survive into the unified mesh. Joints whose bones never win a
    // skinning influence (the neck hides behind the chest bone) fall back to
    // an inverse-distance ring around the joint.
    for (int j = 0; j < body.skeleton.num_joints(); ++j)
    {
        std::vector<std::pair<int, double>> entries;
        for (int v = 0; v < nb; ++v)
        {
            const double w = body.weights.matrix.coeff(v, j);
            if (w > 1e-9 && stitching.body_to_unified[v] >= 0)
                entries.emplace_back(stitching.body_to_unified[v], w);
        }
        if (entries.empty())
        {
            std::vector<bool> kept(nb);
            for (int v = 0; v < nb; ++v)
                kept[v] = stitching.body_to_unified[v] >= 0;
            for (const int v : nearest_vertices(mesh.vertices, joint_rest[j], 8, &kept))
                entries.emplace_back(stitching.body_to_unified[v],
                                     1.0 / ((mesh.vertices[v] - joint_rest[j]).norm() + 1e-3));
        }
        add_weight_row("body_" + body.skeleton.joints[j].name, entries);
    }

    // Foot landmarks: single surface vertices on each foot tube.
    auto add_foot_marks = [&](const TubeInfo& foot, const char* side) {
        const auto& toe_ring = foot.rings.back();
        int little = toe_ring[0];
        for (const int v : toe_ring)
            if (std::abs(mesh.vertices[v].x()) > std::abs(mesh.vertices[little].x()))
                little = v;
        const auto& mid_ring = foot.rings[foot.rings.size() / 2];
        int ball = mid_ring[0];
        for (const int v : mid_ring)
            if (mesh.vertices[v].y() < mesh.vertices[ball].y())
                ball = v;
        add_weight_row(std::string("foot_") + side + "_bigtoe_tip",
                       {{stitching.body_to_unified[foot.cap_end], 1.0}});
        add_weight_row(std::string("foot_") + side + "_littletoe_tip",
                       {{stitching.body_to_unified[little], 1.0}});
        add_weight_row(std::string("foot_") + side + "_ball",
                       {{stitching.body_to_unified[ball], 1.0}});
    };
    add_foot_marks(left_foot_tube, "l");
    add_foot_marks(right_foot_tube, "r");

    // Hand keypoints: wrist and finger joint rings plus fingertips.
    auto add_hand_marks = [&](const models::HandModel& hand, const detail::HandBuild& build,
                              int offset, const char* side) {
        for (int j = 0; j < hand.skeleton.num_joints(); ++j)
        {
            std::vector<std::pair<int, double>> entries;
            for (int v = 0; v < hand.num_vertices(); ++v)
            {
                const double w = hand.weights.matrix.coeff(v, j);
                if (w > 1e-9)
                    entries.emplace_back(stitching.stacked_to_unified[offset + v], w);
            }
            add_weight_row(std::string(side) + "_" + hand.skeleton.joints[j].name, entries);
        }
        for (std::size_t f = 0; f < build.tip_vertices.size(); ++f)
            add_weight_row(std::string(side) + "_" + build.finger_names[f] + "_tip",
                           {{stitching.stacked_to_unified[offset + build.tip_vertices[f]], 1.0}});
    };
    add_hand_marks(model.left_hand, left_build, lh_offset, "lhand");
    add_hand_marks(model.right_hand, right_build, rh_offset, "rhand");

    // Face points: triangle centroids spread over the patch, at most 70.
    {
        const int available = static_cast<int>(face.mean.triangles.size());
        const int count = std::min(70, available);
        for (int k = 0; k < count; ++k)
        {
            const auto& tri = face.mean.triangles[(k * available) / count];
            char id[16];
            std::snprintf(id, sizeof(id), "face_%02d", k);
            add_weight_row(id,
                           {{stitching.stacked_to_unified[face_offset + tri[0]], 1.0 / 3},
                            {stitching.stacked_to_unified[face_offset + tri[1]], 1.0 / 3},
                            {stitching.stacked_to_unified[face_offset + tri[2]], 1.0 / 3}});
        }
    }

    model.keypoints.rows.resize(static_cast<int>(kp_ids.size()), model.num_vertices());
    model.keypoints.rows.setFromTriplets(kp_triplets.begin(), kp_triplets.end());
    model.keypoints.ids = kp_ids;

    // Default ICP exclusion: every face and hand vertex.
    for (int s = face_offset; s < model.stacked_size(); ++s)
        model.icp_mask.push_back(stitching.stacked_to_unified[s]);
    std::sort(model.icp_mask.begin(), model.icp_mask.end());

    validate(model.body);
    validate(model.face);
    validate(model.left_hand);
    validate(model.right_hand);
    validate(model.keypoints);
    return model;
}

/// Knobs for drawing ground-truth parameters. Finger twist stays at zero
/// (a fingertip on the bone axis cannot witness it) and hand scales stay at
/// one, so every sampled parameter is identifiable from the measurements.
struct GroundTruthOptions
{
    double body_pose_magnitude = 0.25;
    double root_yaw_range = 1.0;
    double shape_sigma = 0.4;
    double translation_range = 0.2;
    bool animate_expression = true;
};

inline Eigen::VectorXd sample_ground_truth(const models::UnifiedModel& model, std::mt19937_64& rng,
                                           const GroundTruthOptions& options = {})
{
    const auto layout = models::unified_layout(model);
    Eigen::VectorXd params = models::neutral_parameters(layout);
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    auto clamp = [](double x, double m) { return std::clamp(x, -m, m); };

    auto body_pose = layout.segment(params, "body_pose");
    for (int i = 0; i < body_pose.size(); ++i)
        body_pose[i] = clamp(0.6 * options.body_pose_magnitude * gauss(rng),
                             options.body_pose_magnitude);
    body_pose[1] = options.root_yaw_range * unit(rng); // root yaw

    for (const char* block : {"left_hand_pose", "right_hand_pose"})
    {
        auto hand_pose = layout.segment(params, block);
        for (int j = 1; j < hand_pose.size() / 3; ++j)
        {
            hand_pose[3 * j + 0] = 0.0;                  // no twist about the bone
            hand_pose[3 * j + 1] = 0.1 * unit(rng);      // spread
            hand_pose[3 * j + 2] = 0.25 + 0.25 * unit(rng); // curl
        }
        // The hand root stays neutral: the seam rings sit on the wrist plane
        // and witness any root rotation, so nonzero truth would penalize the
        // true parameters themselves.
        hand_pose.segment(0, 3).setZero();
    }

    for (const char* block : {"body_shape", "face_identity", "face_expression"})
    {
        if (std::string(block) == "face_expression" && !options.animate_expression)
            continue;
        auto coeffs = layout.segment(params, block);
        for (int i = 0; i < coeffs.size(); ++i)
            coeffs[i] = clamp(options.shape_sigma * gauss(rng), 1.0);
    }

    auto t = layout.segment(params, "translation");
    t[0] = options.translation_range * unit(rng);
    t[1] = 0.05 * unit(rng);
    t[2] = options.translation_range * unit(rng);
    return params;
}

} // namespace synth
} // namespace unibody
