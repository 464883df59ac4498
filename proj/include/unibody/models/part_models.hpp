/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/models/part_models.hpp
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
#include "unibody/kinematics/forward.hpp"
#include "unibody/kinematics/skeleton.hpp"

#include "Eigen/Core"
#include "Eigen/SparseCore"

#include <stdexcept>
#include <vector>

namespace unibody {
namespace models {

/**
 * Articulated body part: mean mesh, identity blendshapes, a skeleton whose
 * rest joints follow the shaped surface through a joint regressor, and
 * skinning weights.
 *
 * Blendshape matrices are vertex-major: rows 3i..3i+2 hold the displacement
 * of vertex i, one column per shape coefficient.
 */
struct BodyModel
{
    core::Mesh mean;
    Eigen::MatrixXd blendshapes; // 3N x K
    kinematics::Skeleton skeleton;
    kinematics::SkinningWeights weights;
    Eigen::SparseMatrix<double, Eigen::RowMajor> joint_regressor; // J x N

    int num_vertices() const { return mean.num_vertices(); }
    int num_shape_coefficients() const { return static_cast<int>(blendshapes.cols()); }
};

inline void validate(const BodyModel& model)
{
    validate(model.mean);
    validate(model.skeleton);
    validate(model.weights);
    if (model.blendshapes.rows() != 3 * model.num_vertices())
        throw std::invalid_argument("BodyModel: blendshape rows must be 3x vertex count");
    if (model.weights.num_vertices() != model.num_vertices() ||
        model.weights.num_joints() != model.skeleton.num_joints())
        throw std::invalid_argument("BodyModel: skinning weight dimensions mismatch");
    if (model.joint_regressor.rows() != model.skeleton.num_joints() ||
        model.joint_regressor.cols() != model.num_vertices())
        throw std::invalid_argument("BodyModel: joint regressor dimensions mismatch");
}

/// Rest vertices displaced by the identity blendshapes.
inline std::vector<Eigen::Vector3d> shaped_rest_vertices(const core::Mesh& mean,
                                                         const Eigen::MatrixXd& basis,
                                                         const Eigen::VectorXd& coefficients)
{
    if (coefficients.size() != basis.cols())
        throw std::invalid_argument("shaped_rest_vertices: coefficient count mismatch");
    std::vector<Eigen::Vector3d> rest(mean.vertices);
    if (coefficients.size() > 0)
    {
        const Eigen::VectorXd displacement = basis * coefficients;
        for (int i = 0; i < mean.num_vertices(); ++i)
            rest[i] += displacement.segment<3>(3 * i);
    }
    return rest;
}

/// Joint positions regressed from a vertex set.
inline std::vector<Eigen::Vector3d>
regress_joints(const Eigen::SparseMatrix<double, Eigen::RowMajor>& regressor,
               const std::vector<Eigen::Vector3d>& vertices)
{
    std::vector<Eigen::Vector3d> joints(regressor.rows(), Eigen::Vector3d::Zero());
    for (int j = 0; j < regressor.rows(); ++j)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(regressor, j); it; ++it)
            joints[j] += it.value() * vertices[it.col()];
    return joints;
}

/// Per-joint rest offsets from regressed joint positions.
inline std::vector<Eigen::Vector3d> offsets_from_positions(const kinematics::Skeleton& skeleton,
                                                           const std::vector<Eigen::Vector3d>& pos)
{
    std::vector<Eigen::Vector3d> offsets(pos.size());
    for (int j = 0; j < skeleton.num_joints(); ++j)
        offsets[j] =
            skeleton.joints[j].parent < 0 ? pos[j] : pos[j] - pos[skeleton.joints[j].parent];
    return offsets;
}

/// Forward kinematics with shape-dependent rest joints.
inline kinematics::FkResult body_fk(const BodyModel& model, const Eigen::VectorXd& pose,
                                    const Eigen::VectorXd& shape, const Eigen::Vector3d& translation)
{
    const auto rest = shaped_rest_vertices(model.mean, model.blendshapes, shape);
    const auto joints = regress_joints(model.joint_regressor, rest);
    const auto offsets = offsets_from_positions(model.skeleton, joints);
    return kinematics::forward_kinematics(model.skeleton, pose, Eigen::VectorXd(), translation,
                                          &offsets);
}

/// Posed body mesh: blendshape displacement, then linear blend skinning.
inline core::Mesh body_mesh(const BodyModel& model, const Eigen::VectorXd& pose,
                            const Eigen::VectorXd& shape,
                            const Eigen::Vector3d& translation = Eigen::Vector3d::Zero())
{
    const auto rest = shaped_rest_vertices(model.mean, model.blendshapes, shape);
    const auto fk = body_fk(model, pose, shape, translation);
    core::Mesh out;
    out.vertices = kinematics::skin_vertices(rest, model.weights, fk.rest_to_posed);
    out.triangles = model.mean.triangles;
    return out;
}

/**
 * Face part: mean mesh plus identity and expression bases, rigidly carried by
 * the body's head joint through an alignment transform.
 */
struct FaceModel
{
    core::Mesh mean; // in the face-local frame
    Eigen::MatrixXd identity_basis;   // 3N x K_id
    Eigen::MatrixXd expression_basis; // 3N x K_expr

    int num_vertices() const { return mean.num_vertices(); }
    int num_identity() const { return static_cast<int>(identity_basis.cols()); }
    int num_expression() const { return static_cast<int>(expression_basis.cols()); }
};

inline void validate(const FaceModel& model)
{
    validate(model.mean);
    if (model.identity_basis.rows() != 3 * model.num_vertices() ||
        model.expression_basis.rows() != 3 * model.num_vertices())
        throw std::invalid_argument("FaceModel: basis rows must be 3x vertex count");
}

inline std::vector<Eigen::Vector3d> face_local_vertices(const FaceModel& model,
                                                        const Eigen::VectorXd& identity,
                                                        const Eigen::VectorXd& expression)
{
    if (identity.size() != model.num_identity() || expression.size() != model.num_expression())
        throw std::invalid_argument("face_local_vertices: coefficient count mismatch");
    std::vector<Eigen::Vector3d> v(model.mean.vertices);
    const Eigen::VectorXd disp =
        model.identity_basis * identity + model.expression_basis * expression;
    for (int i = 0; i < model.num_vertices(); ++i)
        v[i] += disp.segment<3>(3 * i);
    return v;
}

/// World-space face mesh: head transform composed with the alignment.
inline core::Mesh face_mesh(const FaceModel& model, const Eigen::VectorXd& identity,
                            const Eigen::VectorXd& expression, const Eigen::Matrix4d& head_transform,
                            const Eigen::Matrix4d& alignment)
{
    const auto local = face_local_vertices(model, identity, expression);
    const Eigen::Matrix4d m = head_transform * alignment;
    core::Mesh out;
    out.vertices.resize(local.size());
    for (std::size_t i = 0; i < local.size(); ++i)
        out.vertices[i] = m.topLeftCorner<3, 3>() * local[i] + m.topRightCorner<3, 1>();
    out.triangles = model.mean.triangles;
    return out;
}

/**
 * Hand part: fixed-shape rigged mesh in its local frame (root at the wrist),
 * Euler-parameterized joints with per-axis bone scaling, attached to the body
 * wrist through an alignment transform.
 */
struct HandModel
{
    core::Mesh mesh; // in the hand-local frame
    kinematics::Skeleton skeleton;
    kinematics::SkinningWeights weights;
    Eigen::SparseMatrix<double, Eigen::RowMajor> joint_regressor; // J x N, hand-local

    int num_vertices() const { return mesh.num_vertices(); }
};

inline void validate(const HandModel& model)
{
    validate(model.mesh);
    validate(model.skeleton);
    validate(model.weights);
    if (model.weights.num_vertices() != model.num_vertices() ||
        model.weights.num_joints() != model.skeleton.num_joints())
        throw std::invalid_argument("HandModel: skinning weight dimensions mismatch");
}

inline kinematics::FkResult hand_fk(const HandModel& model, const Eigen::VectorXd& pose,
                                    const Eigen::VectorXd& scales)
{
    return kinematics::forward_kinematics(model.skeleton, pose, scales);
}

/// World-space hand mesh: local LBS, then wrist transform and alignment.
inline core::Mesh hand_mesh(const HandModel& model, const Eigen::VectorXd& pose,
                            const Eigen::VectorXd& scales, const Eigen::Matrix4d& wrist_transform,
                            const Eigen::Matrix4d& alignment)
{
    const auto fk = hand_fk(model, pose, scales);
    const auto local = kinematics::skin_vertices(model.mesh.vertices, model.weights,
                                                 fk.rest_to_posed);
    const Eigen::Matrix4d m = wrist_transform * alignment;
    core::Mesh out;
    out.vertices.resize(local.size());
    for (std::size_t i = 0; i < local.size(); ++i)
        out.vertices[i] = m.topLeftCorner<3, 3>() * local[i] + m.topRightCorner<3, 1>();
    out.triangles = model.mesh.triangles;
    return out;
}

/**
 * Rigid attachment of a part to a body joint. The rotation is fixed at its
 * rest calibration; the translation follows the blendshape-induced
 * displacement of the attachment joint.
 */
struct PartAttachment
{
    int body_joint = -1;
    Eigen::Matrix4d rest_alignment = Eigen::Matrix4d::Identity();
};

/// Blendshape-induced displacement of a body joint at the given shape.
inline Eigen::Vector3d joint_shape_displacement(const BodyModel& body, int joint,
                                                const Eigen::VectorXd& shape)
{
    Eigen::Vector3d d = Eigen::Vector3d::Zero();
    if (shape.size() == 0)
        return d;
    const Eigen::VectorXd disp = body.blendshapes * shape;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(body.joint_regressor,
                                                                        joint);
         it; ++it)
        d += it.value() * disp.segment<3>(3 * it.col());
    return d;
}

/// Alignment transform at the given body shape: the rest calibration shifted
/// by the attachment joint's blendshape displacement.
inline Eigen::Matrix4d alignment_transform(const BodyModel& body, const PartAttachment& attachment,
                                           const Eigen::VectorXd& shape)
{
    Eigen::Matrix4d gamma = attachment.rest_alignment;
    gamma.topRightCorner<3, 1>() += joint_shape_displacement(body, attachment.body_joint, shape);
    return gamma;
}

} // namespace models
} // namespace unibody
