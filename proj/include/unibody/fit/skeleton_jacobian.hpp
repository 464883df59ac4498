/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/fit/skeleton_jacobian.hpp
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

#include "unibody/kinematics/forward.hpp"

#include "Eigen/Core"

#include <utility>
#include <vector>

namespace unibody {
namespace fit {

/**
 * Where a skeleton's degrees of freedom live inside the flat parameter
 * vector, plus how shape coefficients displace the rest joints.
 */
struct SkeletonParamMap
{
    std::vector<int> rotation_offset; // per joint; -1 when the joint is not optimized
    std::vector<int> scale_offset;    // per joint; -1 for non-scalable joints
    int translation_offset = -1;
    int shape_offset = -1;
    int shape_count = 0;
    /// d(rest joint position)/d(shape coefficient): 3J x K.
    Eigen::MatrixXd joint_position_shape_jacobian;
};

/// Sparse per-joint derivative list, sorted by parameter index.
using TransformJacobian = std::vector<std::pair<int, Eigen::Matrix4d>>;

struct SkeletonEval
{
    kinematics::FkResult fk;
    std::vector<TransformJacobian> transform_jacobians; // d(rest_to_posed_j)/d(param)
};

namespace detail {

inline TransformJacobian merge_add(const TransformJacobian& a, const TransformJacobian& b)
{
    TransformJacobian out;
    out.reserve(a.size() + b.size());
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size())
    {
        if (j == b.size() || (i < a.size() && a[i].first < b[j].first))
            out.push_back(a[i++]);
        else if (i == a.size() || b[j].first < a[i].first)
            out.push_back(b[j++]);
        else
        {
            out.emplace_back(a[i].first, a[i].second + b[j].second);
            ++i;
            ++j;
        }
    }
    return out;
}

} // namespace detail

/**
 * Forward kinematics with analytic derivatives of every rest-to-posed
 * transform with respect to rotation, scale, translation, and shape
 * parameters. Local transforms compose as translate(offset(shape)) *
 * rot(theta) * diag(scale); shapes move the rest offsets through the joint
 * regressor, which also shifts the rest-inverse composition.
 */
inline SkeletonEval
evaluate_skeleton_with_jacobian(const kinematics::Skeleton& skeleton,
                                const SkeletonParamMap& map, const Eigen::VectorXd& pose,
                                const Eigen::VectorXd& scales, const Eigen::Vector3d& translation,
                                const std::vector<Eigen::Vector3d>* rest_offsets = nullptr)
{
    const int num_joints = skeleton.num_joints();
    SkeletonEval eval;
    eval.fk = kinematics::forward_kinematics(skeleton, pose, scales, translation, rest_offsets);
    eval.transform_jacobians.resize(num_joints);

    // Derivatives of the joint-to-world chain, per joint.
    std::vector<TransformJacobian> world_jac(num_joints);

    int scale_cursor = 0;
    for (int j = 0; j < num_joints; ++j)
    {
        const kinematics::Joint& joint = skeleton.joints[j];
        const int parent = joint.parent;
        const Eigen::Vector3d offset = rest_offsets ? (*rest_offsets)[j] : joint.offset;

        Eigen::Vector3d scale = Eigen::Vector3d::Ones();
        int scale_param = -1;
        if (joint.scalable)
        {
            scale = scales.segment<3>(3 * scale_cursor);
            scale_param =
                map.scale_offset.empty() ? -1 : map.scale_offset[j];
            ++scale_cursor;
        }

        const Eigen::Vector3d rot_params = pose.segment<3>(3 * j);
        const Eigen::Matrix3d rot = joint.rotation == kinematics::RotationType::angle_axis
                                        ? kinematics::angle_axis_to_matrix(rot_params)
                                        : kinematics::euler_xyz_to_matrix(rot_params);
        const auto rot_jac = joint.rotation == kinematics::RotationType::angle_axis
                                 ? kinematics::angle_axis_jacobian(rot_params)
                                 : kinematics::euler_xyz_jacobian(rot_params);

        Eigen::Matrix4d local = Eigen::Matrix4d::Identity();
        local.topLeftCorner<3, 3>() = rot * scale.asDiagonal();
        local.topRightCorner<3, 1>() = offset;
        if (parent < 0)
            local.topRightCorner<3, 1>() += translation;

        // Local parameter derivatives.
        TransformJacobian local_jac;
        const int rot_offset = map.rotation_offset.empty() ? -1 : map.rotation_offset[j];
        if (rot_offset >= 0)
            for (int a = 0; a < 3; ++a)
            {
                Eigen::Matrix4d d = Eigen::Matrix4d::Zero();
                d.topLeftCorner<3, 3>() = rot_jac[a] * scale.asDiagonal();
                local_jac.emplace_back(rot_offset + a, d);
            }
        if (scale_param >= 0)
            for (int a = 0; a < 3; ++a)
            {
                Eigen::Matrix4d d = Eigen::Matrix4d::Zero();
                Eigen::Vector3d ds = Eigen::Vector3d::Zero();
                ds[a] = 1.0;
                d.topLeftCorner<3, 3>() = rot * ds.asDiagonal();
                local_jac.emplace_back(scale_param + a, d);
            }
        if (parent < 0 && map.translation_offset >= 0)
            for (int a = 0; a < 3; ++a)
            {
                Eigen::Matrix4d d = Eigen::Matrix4d::Zero();
                d(a, 3) = 1.0;
                local_jac.emplace_back(map.translation_offset + a, d);
            }
        if (map.shape_count > 0)
            for (int c = 0; c < map.shape_count; ++c)
            {
                const Eigen::Vector3d dpos =
                    map.joint_position_shape_jacobian.block<3, 1>(3 * j, c);
                const Eigen::Vector3d dparent =
                    parent < 0 ? Eigen::Vector3d::Zero()
                               : Eigen::Vector3d(
                                     map.joint_position_shape_jacobian.block<3, 1>(3 * parent, c));
                Eigen::Matrix4d d = Eigen::Matrix4d::Zero();
                d.topRightCorner<3, 1>() = dpos - dparent; // offset derivative
                local_jac.emplace_back(map.shape_offset + c, d);
            }
        std::sort(local_jac.begin(), local_jac.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });

        // Chain rule through the hierarchy.
        TransformJacobian chained;
        if (parent >= 0)
        {
            chained.reserve(world_jac[parent].size());
            for (const auto& [p, dG] : world_jac[parent])
                chained.emplace_back(p, dG * local);
        }
        TransformJacobian local_in_world;
        local_in_world.reserve(local_jac.size());
        const Eigen::Matrix4d parent_world =
            parent < 0 ? Eigen::Matrix4d::Identity() : eval.fk.joint_to_world[parent];
        for (const auto& [p, dL] : local_jac)
            local_in_world.emplace_back(p, parent_world * dL);
        world_jac[j] = detail::merge_add(chained, local_in_world);

        // Rest-to-posed: T = G * translate(-rest_j); shapes also move rest_j.
        Eigen::Matrix4d rest_inverse = Eigen::Matrix4d::Identity();
        rest_inverse.topRightCorner<3, 1>() = -eval.fk.rest_positions[j];
        TransformJacobian t_jac;
        t_jac.reserve(world_jac[j].size());
        for (const auto& [p, dG] : world_jac[j])
            t_jac.emplace_back(p, dG * rest_inverse);
        if (map.shape_count > 0)
        {
            TransformJacobian shape_terms;
            for (int c = 0; c < map.shape_count; ++c)
            {
                Eigen::Matrix4d d_rest_inv = Eigen::Matrix4d::Zero();
                d_rest_inv.topRightCorner<3, 1>() =
                    -map.joint_position_shape_jacobian.block<3, 1>(3 * j, c);
                shape_terms.emplace_back(map.shape_offset + c,
                                         eval.fk.joint_to_world[j] * d_rest_inv);
            }
            t_jac = detail::merge_add(t_jac, shape_terms);
        }
        eval.transform_jacobians[j] = std::move(t_jac);
    }
    return eval;
}

} // namespace fit
} // namespace unibody
