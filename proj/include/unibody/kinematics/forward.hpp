/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/kinematics/forward.hpp
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

#include "unibody/kinematics/rotations.hpp"
#include "unibody/kinematics/skeleton.hpp"

#include "Eigen/Core"
#include "Eigen/LU"

#include <vector>

namespace unibody {
namespace kinematics {

struct FkResult
{
    /// Local-to-world transform of each joint frame: parent chain composed
    /// with translate(offset) * rot(theta) * diag(scale); the root picks up
    /// the global translation.
    std::vector<Eigen::Matrix4d> joint_to_world;
    /// Rest-to-posed skinning transforms: joint_to_world composed with the
    /// inverse rest chain. Identity at zero pose, unit scale, zero
    /// translation.
    std::vector<Eigen::Matrix4d> rest_to_posed;
    std::vector<Eigen::Vector3d> joint_positions; // posed
    std::vector<Eigen::Vector3d> rest_positions;
};

namespace detail {

inline Eigen::Matrix4d local_transform(const Eigen::Vector3d& offset, const Eigen::Matrix3d& rot,
                                       const Eigen::Vector3d& scale)
{
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rot * scale.asDiagonal();
    m.topRightCorner<3, 1>() = offset;
    return m;
}

inline Eigen::Matrix3d joint_rotation(const Joint& joint, const Eigen::Vector3d& params)
{
    return joint.rotation == RotationType::angle_axis ? angle_axis_to_matrix(params)
                                                      : euler_xyz_to_matrix(params);
}

} // namespace detail

/**
 * Forward kinematics. `pose` holds 3 rotation parameters per joint (angle
 * axis or intrinsic-XYZ Euler angles, per joint); `scales` holds 3 per-axis
 * factors per scalable joint, in joint order. Scales compose in the bone's
 * local frame, so children inherit scaled frames. `rest_offsets` overrides
 * the skeleton's rest offsets when the rest configuration is shape-dependent.
 */
inline FkResult forward_kinematics(const Skeleton& skeleton, const Eigen::VectorXd& pose,
                                   const Eigen::VectorXd& scales,
                                   const Eigen::Vector3d& translation = Eigen::Vector3d::Zero(),
                                   const std::vector<Eigen::Vector3d>* rest_offsets = nullptr)
{
    const int num_joints = skeleton.num_joints();
    if (pose.size() != 3 * num_joints)
        throw std::invalid_argument("forward_kinematics: pose must have 3 entries per joint");
    if (scales.size() != 3 * skeleton.num_scalable())
        throw std::invalid_argument(
            "forward_kinematics: scales must have 3 entries per scalable joint");
    if (rest_offsets && static_cast<int>(rest_offsets->size()) != num_joints)
        throw std::invalid_argument("forward_kinematics: rest offset override size mismatch");

    FkResult fk;
    fk.joint_to_world.resize(num_joints);
    fk.rest_to_posed.resize(num_joints);
    fk.joint_positions.resize(num_joints);
    fk.rest_positions.resize(num_joints);

    int scale_cursor = 0;
    for (int j = 0; j < num_joints; ++j)
    {
        const Joint& joint = skeleton.joints[j];
        const Eigen::Vector3d offset = rest_offsets ? (*rest_offsets)[j] : joint.offset;
        Eigen::Vector3d scale = Eigen::Vector3d::Ones();
        if (joint.scalable)
        {
            scale = scales.segment<3>(3 * scale_cursor);
            ++scale_cursor;
            if ((scale.array() <= 0.0).any())
                throw std::invalid_argument("forward_kinematics: scales must be positive");
        }
        const Eigen::Matrix3d rot = detail::joint_rotation(joint, pose.segment<3>(3 * j));
        Eigen::Matrix4d local = detail::local_transform(offset, rot, scale);

        if (joint.parent < 0)
        {
            local.topRightCorner<3, 1>() += translation;
            fk.joint_to_world[j] = local;
            fk.rest_positions[j] = offset;
        }
        else
        {
            fk.joint_to_world[j] = fk.joint_to_world[joint.parent] * local;
            fk.rest_positions[j] = fk.rest_positions[joint.parent] + offset;
        }
        fk.joint_positions[j] = fk.joint_to_world[j].topRightCorner<3, 1>();

        // G0 is a pure translation to the rest position, so composing its
        // inverse just shifts the frame back.
        Eigen::Matrix4d rest_inverse = Eigen::Matrix4d::Identity();
        rest_inverse.topRightCorner<3, 1>() = -fk.rest_positions[j];
        fk.rest_to_posed[j] = fk.joint_to_world[j] * rest_inverse;
    }
    return fk;
}

/**
 * Linear blend skinning: v_i = truncate( sum_j w_ij * T_j * (v0_i; 1) ) with
 * rest-to-posed transforms T_j.
 */
inline std::vector<Eigen::Vector3d> skin_vertices(const std::vector<Eigen::Vector3d>& rest,
                                                  const SkinningWeights& weights,
                                                  const std::vector<Eigen::Matrix4d>& transforms)
{
    if (static_cast<int>(rest.size()) != weights.num_vertices())
        throw std::invalid_argument("skin_vertices: vertex count mismatch");
    if (static_cast<int>(transforms.size()) != weights.num_joints())
        throw std::invalid_argument("skin_vertices: transform count mismatch");
    validate(weights);

    std::vector<Eigen::Vector3d> posed(rest.size());
    for (int i = 0; i < weights.num_vertices(); ++i)
    {
        Eigen::Matrix4d blended = Eigen::Matrix4d::Zero();
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(weights.matrix, i); it;
             ++it)
            blended += it.value() * transforms[it.col()];
        posed[i] = blended.topLeftCorner<3, 3>() * rest[i] + blended.topRightCorner<3, 1>();
    }
    return posed;
}

struct UnposeResult
{
    std::vector<Eigen::Vector3d> vertices;
    std::vector<int> singular; // vertices whose blended transform was not invertible
};

/**
 * Inverse of skin_vertices: maps posed vertices back through the inverse of
 * each vertex's blended transform. Vertices with a singular blend are flagged
 * and passed through unchanged.
 */
inline UnposeResult unpose_vertices(const std::vector<Eigen::Vector3d>& posed,
                                    const SkinningWeights& weights,
                                    const std::vector<Eigen::Matrix4d>& transforms)
{
    if (static_cast<int>(posed.size()) != weights.num_vertices())
        throw std::invalid_argument("unpose_vertices: vertex count mismatch");
    if (static_cast<int>(transforms.size()) != weights.num_joints())
        throw std::invalid_argument("unpose_vertices: transform count mismatch");

    UnposeResult result;
    result.vertices.resize(posed.size());
    for (int i = 0; i < weights.num_vertices(); ++i)
    {
        Eigen::Matrix4d blended = Eigen::Matrix4d::Zero();
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(weights.matrix, i); it;
             ++it)
            blended += it.value() * transforms[it.col()];
        const Eigen::Matrix3d a = blended.topLeftCorner<3, 3>();
        if (std::abs(a.determinant()) < 1e-12)
        {
            result.singular.push_back(i);
            result.vertices[i] = posed[i];
            continue;
        }
        result.vertices[i] = a.lu().solve(posed[i] - blended.topRightCorner<3, 1>());
    }
    return result;
}

} // namespace kinematics
} // namespace unibody
