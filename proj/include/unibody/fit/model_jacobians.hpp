/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/fit/model_jacobians.hpp
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

#include "unibody/fit/skeleton_jacobian.hpp"
#include "unibody/models/merged.hpp"
#include "unibody/models/unified.hpp"

#include "Eigen/Core"

#include <vector>

namespace unibody {
namespace fit {

enum class PriorKind
{
    pose,
    shape,
    scale
};

struct PriorEntry
{
    int index;
    double mean;
    PriorKind kind;
};

namespace detail {

/// d(joint position)/d(shape coefficient) through a joint regressor and a
/// vertex-major blendshape matrix.
inline Eigen::MatrixXd
joint_shape_jacobian(const Eigen::SparseMatrix<double, Eigen::RowMajor>& regressor,
                     const Eigen::MatrixXd& basis)
{
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(3 * regressor.rows(), basis.cols());
    for (int j = 0; j < regressor.rows(); ++j)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(regressor, j); it;
             ++it)
            out.middleRows<3>(3 * j) += it.value() * basis.middleRows<3>(3 * it.col());
    return out;
}

inline void apply_transform_jacobian(const TransformJacobian& jac, const Eigen::Vector3d& point,
                                     double weight, Eigen::Ref<Eigen::MatrixXd> out)
{
    const Eigen::Vector4d h = point.homogeneous();
    for (const auto& [p, d] : jac)
        out.col(p) += weight * (d * h).head<3>();
}

/// Pose/shape-class prior entries for a block layout, skipping the global
/// translation and the root rotation (their priors would fight the very
/// quantities the torso stage estimates).
inline std::vector<PriorEntry> default_prior_entries(const ParameterLayout& layout,
                                                     const std::string& root_pose_block)
{
    std::vector<PriorEntry> entries;
    for (const auto& block : layout.blocks)
    {
        if (block.name == "translation")
            continue;
        PriorKind kind = PriorKind::pose;
        double mean = 0.0;
        if (block.name.find("scale") != std::string::npos)
        {
            kind = PriorKind::scale;
            mean = 1.0;
        }
        else if (block.name == "body_shape" || block.name == "face_identity" ||
                 block.name == "shape")
            kind = PriorKind::shape;
        const int skip = block.name == root_pose_block ? 3 : 0;
        for (int i = skip; i < block.size; ++i)
            entries.push_back({block.offset + i, mean, kind});
    }
    return entries;
}

} // namespace detail

/**
 * Fitting adapter for the stitched model: forward evaluation plus lazy
 * per-vertex jacobians over the stacked part vertices, the blend rows, the
 * seam anchors, and the part attachments.
 */
class UnifiedAdapter
{
public:
    struct State
    {
        models::UnifiedState base;
        SkeletonEval body;
        SkeletonEval left_hand;
        SkeletonEval right_hand;
        std::vector<Eigen::Vector3d> face_local;
        std::vector<Eigen::Vector3d> left_hand_local;
        std::vector<Eigen::Vector3d> right_hand_local;
        TransformJacobian face_anchor_jac;
        TransformJacobian left_anchor_jac;
        TransformJacobian right_anchor_jac;
        mutable Eigen::MatrixXd jacobian_cache; // 3*stacked x P
        mutable std::vector<std::uint8_t> cached;
    };

    explicit UnifiedAdapter(const models::UnifiedModel& model)
        : model_(&model), layout_(models::unified_layout(model))
    {
        validate(layout_);
        const auto& body = model.body;
        body_map_.rotation_offset.resize(body.skeleton.num_joints());
        body_map_.scale_offset.assign(body.skeleton.num_joints(), -1);
        const int body_pose_offset = layout_.block("body_pose").offset;
        for (int j = 0; j < body.skeleton.num_joints(); ++j)
            body_map_.rotation_offset[j] = body_pose_offset + 3 * j;
        body_map_.translation_offset = layout_.block("translation").offset;
        body_map_.shape_offset = layout_.block("body_shape").offset;
        body_map_.shape_count = body.num_shape_coefficients();
        body_map_.joint_position_shape_jacobian =
            detail::joint_shape_jacobian(body.joint_regressor, body.blendshapes);

        auto hand_map = [&](const models::HandModel& hand, const char* pose_block,
                            const char* scale_block) {
            SkeletonParamMap map;
            map.rotation_offset.resize(hand.skeleton.num_joints());
            map.scale_offset.resize(hand.skeleton.num_joints());
            const int pose_offset = layout_.block(pose_block).offset;
            const int scale_offset = layout_.block(scale_block).offset;
            int cursor = 0;
            for (int j = 0; j < hand.skeleton.num_joints(); ++j)
            {
                map.rotation_offset[j] = pose_offset + 3 * j;
                map.scale_offset[j] = hand.skeleton.joints[j].scalable
                                          ? scale_offset + 3 * cursor++
                                          : -1;
            }
            return map;
        };
        left_map_ = hand_map(model.left_hand, "left_hand_pose", "left_hand_scale");
        right_map_ = hand_map(model.right_hand, "right_hand_pose", "right_hand_scale");

        priors_ = detail::default_prior_entries(layout_, "body_pose");
    }

    const models::UnifiedModel& model() const { return *model_; }
    const ParameterLayout& layout() const { return layout_; }
    const measure::KeypointRegressor& keypoints() const { return model_->keypoints; }
    const std::vector<int>& icp_mask() const { return model_->icp_mask; }
    const std::vector<std::array<int, 3>>& triangles() const { return model_->triangles; }
    const std::vector<PriorEntry>& prior_entries() const { return priors_; }
    int num_vertices() const { return model_->num_vertices(); }
    bool has_seams() const { return true; }
    const std::vector<models::SeamConstraint>& seams() const { return model_->seams; }
    /// Triangle list the seam anchors index into (the body part mesh).
    const std::vector<std::array<int, 3>>& seam_triangles() const
    {
        return model_->body.mean.triangles;
    }

    Eigen::VectorXd neutral_parameters() const { return models::neutral_parameters(layout_); }

    Eigen::Vector3d root_rest_position() const
    {
        return model_->body.skeleton.joints[0].offset;
    }

    State evaluate(const Eigen::VectorXd& params) const
    {
        State state;
        state.base = models::evaluate_unified(*model_, params);

        const Eigen::VectorXd body_shape = layout_.segment(params, "body_shape");
        const auto offsets = models::offsets_from_positions(
            model_->body.skeleton,
            models::regress_joints(model_->body.joint_regressor, state.base.body_rest));
        state.body = evaluate_skeleton_with_jacobian(
            model_->body.skeleton, body_map_, layout_.segment(params, "body_pose"),
            Eigen::VectorXd(), layout_.segment(params, "translation"), &offsets);

        state.left_hand = evaluate_skeleton_with_jacobian(
            model_->left_hand.skeleton, left_map_, layout_.segment(params, "left_hand_pose"),
            layout_.segment(params, "left_hand_scale"), Eigen::Vector3d::Zero());
        state.right_hand = evaluate_skeleton_with_jacobian(
            model_->right_hand.skeleton, right_map_, layout_.segment(params, "right_hand_pose"),
            layout_.segment(params, "right_hand_scale"), Eigen::Vector3d::Zero());

        state.face_local = models::face_local_vertices(
            model_->face, layout_.segment(params, "face_identity"),
            layout_.segment(params, "face_expression"));
        state.left_hand_local = kinematics::skin_vertices(
            model_->left_hand.mesh.vertices, model_->left_hand.weights,
            state.left_hand.fk.rest_to_posed);
        state.right_hand_local = kinematics::skin_vertices(
            model_->right_hand.mesh.vertices, model_->right_hand.weights,
            state.right_hand.fk.rest_to_posed);

        state.face_anchor_jac = anchor_jacobian(
            state, model_->face_attach,
            models::alignment_transform(model_->body, model_->face_attach, body_shape));
        state.left_anchor_jac = anchor_jacobian(
            state, model_->left_hand_attach,
            models::alignment_transform(model_->body, model_->left_hand_attach, body_shape));
        state.right_anchor_jac = anchor_jacobian(
            state, model_->right_hand_attach,
            models::alignment_transform(model_->body, model_->right_hand_attach, body_shape));

        state.jacobian_cache.setZero(3 * model_->stacked_size(), layout_.size());
        state.cached.assign(model_->stacked_size(), 0);
        return state;
    }

    const std::vector<Eigen::Vector3d>& vertices(const State& state) const
    {
        return state.base.vertices;
    }

    const std::vector<Eigen::Vector3d>& stacked(const State& state) const
    {
        return state.base.stacked;
    }

    /// Jacobian of a stacked part vertex (3 x P block).
    Eigen::Ref<const Eigen::MatrixXd> stacked_jacobian(const State& state, int s) const
    {
        if (!state.cached[s])
        {
            compute_stacked_jacobian(state, s, state.jacobian_cache.middleRows<3>(3 * s));
            state.cached[s] = 1;
        }
        return state.jacobian_cache.middleRows<3>(3 * s);
    }

    /// Jacobian of a blended (unified) vertex.
    void unified_jacobian(const State& state, int u, Eigen::Ref<Eigen::MatrixXd> out) const
    {
        out.setZero();
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model_->blend, u); it;
             ++it)
            out += it.value() * stacked_jacobian(state, it.col());
    }

private:
    TransformJacobian anchor_jacobian(const State& state, const models::PartAttachment& attach,
                                      const Eigen::Matrix4d& gamma) const
    {
        // A = T_joint * Gamma(shape): chain both factors.
        TransformJacobian jac;
        for (const auto& [p, d] : state.body.transform_jacobians[attach.body_joint])
            jac.emplace_back(p, d * gamma);
        if (body_map_.shape_count > 0)
        {
            TransformJacobian shape_terms;
            for (int c = 0; c < body_map_.shape_count; ++c)
            {
                Eigen::Matrix4d dgamma = Eigen::Matrix4d::Zero();
                dgamma.topRightCorner<3, 1>() =
                    body_map_.joint_position_shape_jacobian.block<3, 1>(
                        3 * attach.body_joint, c);
                shape_terms.emplace_back(
                    body_map_.shape_offset + c,
                    state.body.fk.rest_to_posed[attach.body_joint] * dgamma);
            }
            jac = detail::merge_add(jac, shape_terms);
        }
        return jac;
    }

    void compute_stacked_jacobian(const State& state, int s,
                                  Eigen::Ref<Eigen::MatrixXd> out) const
    {
        out.setZero();
        const int nb = model_->body.num_vertices();
        const int face_end = nb + model_->face.num_vertices();
        const int lh_end = face_end + model_->left_hand.num_vertices();

        if (s < nb)
        {
            const Eigen::Vector3d& rest = state.base.body_rest[s];
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                     model_->body.weights.matrix, s);
                 it; ++it)
            {
                detail::apply_transform_jacobian(state.body.transform_jacobians[it.col()], rest,
                                                 it.value(), out);
                // Blendshape displacement of the rest vertex.
                const Eigen::Matrix3d rot =
                    state.body.fk.rest_to_posed[it.col()].topLeftCorner<3, 3>();
                for (int c = 0; c < body_map_.shape_count; ++c)
                    out.col(body_map_.shape_offset + c) +=
                        it.value() * rot * model_->body.blendshapes.block<3, 1>(3 * s, c);
            }
        }
        else if (s < face_end)
        {
            const int i = s - nb;
            const Eigen::Vector3d& local = state.face_local[i];
            for (const auto& [p, d] : state.face_anchor_jac)
                out.col(p) += (d * local.homogeneous()).head<3>();
            const Eigen::Matrix3d rot = state.base.face_anchor.topLeftCorner<3, 3>();
            const auto& id_block = layout_.block("face_identity");
            for (int c = 0; c < id_block.size; ++c)
                out.col(id_block.offset + c) +=
                    rot * model_->face.identity_basis.block<3, 1>(3 * i, c);
            const auto& ex_block = layout_.block("face_expression");
            for (int c = 0; c < ex_block.size; ++c)
                out.col(ex_block.offset + c) +=
                    rot * model_->face.expression_basis.block<3, 1>(3 * i, c);
        }
        else
        {
            const bool left = s < lh_end;
            const int i = left ? s - face_end : s - lh_end;
            const models::HandModel& hand = left ? model_->left_hand : model_->right_hand;
            const SkeletonEval& hand_eval = left ? state.left_hand : state.right_hand;
            const auto& local = left ? state.left_hand_local : state.right_hand_local;
            const auto& anchor_jac = left ? state.left_anchor_jac : state.right_anchor_jac;
            const Eigen::Matrix4d& anchor =
                left ? state.base.left_hand_anchor : state.base.right_hand_anchor;

            for (const auto& [p, d] : anchor_jac)
                out.col(p) += (d * local[i].homogeneous()).head<3>();
            const Eigen::Matrix3d rot = anchor.topLeftCorner<3, 3>();
            const Eigen::Vector3d& rest = hand.mesh.vertices[i];
            Eigen::MatrixXd local_jac = Eigen::MatrixXd::Zero(3, layout_.size());
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                     hand.weights.matrix, i);
                 it; ++it)
                detail::apply_transform_jacobian(hand_eval.transform_jacobians[it.col()], rest,
                                                 it.value(), local_jac);
            out += rot * local_jac;
        }
    }

    const models::UnifiedModel* model_;
    ParameterLayout layout_;
    SkeletonParamMap body_map_;
    SkeletonParamMap left_map_;
    SkeletonParamMap right_map_;
    std::vector<PriorEntry> priors_;
};

/// Fitting adapter for the merged model: one skeleton, one shape space, no
/// seams; stacked and unified vertices coincide.
class MergedAdapter
{
public:
    struct State
    {
        models::MergedState base;
        SkeletonEval skeleton;
        mutable Eigen::MatrixXd jacobian_cache;
        mutable std::vector<std::uint8_t> cached;
    };

    explicit MergedAdapter(const models::MergedModel& model)
        : model_(&model), layout_(models::merged_layout(model))
    {
        validate(layout_);
        map_.rotation_offset.resize(model.skeleton.num_joints());
        map_.scale_offset.assign(model.skeleton.num_joints(), -1);
        const int pose_offset = layout_.block("pose").offset;
        for (int j = 0; j < model.skeleton.num_joints(); ++j)
            map_.rotation_offset[j] = pose_offset + 3 * j;
        map_.translation_offset = layout_.block("translation").offset;
        map_.shape_offset = layout_.block("shape").offset;
        map_.shape_count = model.num_shape_coefficients();
        map_.joint_position_shape_jacobian =
            detail::joint_shape_jacobian(model.joint_regressor, model.shape_basis);
        priors_ = detail::default_prior_entries(layout_, "pose");
    }

    const models::MergedModel& model() const { return *model_; }
    const ParameterLayout& layout() const { return layout_; }
    const measure::KeypointRegressor& keypoints() const { return model_->keypoints; }
    const std::vector<int>& icp_mask() const { return model_->icp_mask; }
    const std::vector<std::array<int, 3>>& triangles() const { return model_->mean.triangles; }
    const std::vector<PriorEntry>& prior_entries() const { return priors_; }
    int num_vertices() const { return model_->num_vertices(); }
    bool has_seams() const { return false; }
    const std::vector<models::SeamConstraint>& seams() const
    {
        static const std::vector<models::SeamConstraint> empty;
        return empty;
    }
    const std::vector<std::array<int, 3>>& seam_triangles() const
    {
        static const std::vector<std::array<int, 3>> empty;
        return empty;
    }

    Eigen::VectorXd neutral_parameters() const
    {
        return Eigen::VectorXd::Zero(layout_.size());
    }

    Eigen::Vector3d root_rest_position() const { return model_->skeleton.joints[0].offset; }

    State evaluate(const Eigen::VectorXd& params) const
    {
        State state;
        state.base = models::evaluate_merged(*model_, params);
        const auto shape_only = models::shaped_rest_vertices(
            model_->mean, model_->shape_basis, layout_.segment(params, "shape"));
        const auto offsets = models::offsets_from_positions(
            model_->skeleton, models::regress_joints(model_->joint_regressor, shape_only));
        state.skeleton = evaluate_skeleton_with_jacobian(
            model_->skeleton, map_, layout_.segment(params, "pose"), Eigen::VectorXd(),
            layout_.segment(params, "translation"), &offsets);
        state.jacobian_cache.setZero(3 * model_->num_vertices(), layout_.size());
        state.cached.assign(model_->num_vertices(), 0);
        return state;
    }

    const std::vector<Eigen::Vector3d>& vertices(const State& state) const
    {
        return state.base.vertices;
    }

    const std::vector<Eigen::Vector3d>& stacked(const State& state) const
    {
        return state.base.vertices;
    }

    Eigen::Ref<const Eigen::MatrixXd> stacked_jacobian(const State& state, int s) const
    {
        if (!state.cached[s])
        {
            auto out = state.jacobian_cache.middleRows<3>(3 * s);
            const Eigen::Vector3d& rest = state.base.rest[s];
            const auto& ex_block = layout_.block("expression");
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                     model_->weights.matrix, s);
                 it; ++it)
            {
                detail::apply_transform_jacobian(state.skeleton.transform_jacobians[it.col()],
                                                 rest, it.value(), out);
                const Eigen::Matrix3d rot =
                    state.skeleton.fk.rest_to_posed[it.col()].topLeftCorner<3, 3>();
                for (int c = 0; c < map_.shape_count; ++c)
                    out.col(map_.shape_offset + c) +=
                        it.value() * rot * model_->shape_basis.block<3, 1>(3 * s, c);
                for (int c = 0; c < ex_block.size; ++c)
                    out.col(ex_block.offset + c) +=
                        it.value() * rot * model_->expression_basis.block<3, 1>(3 * s, c);
            }
            state.cached[s] = 1;
        }
        return state.jacobian_cache.middleRows<3>(3 * s);
    }

    void unified_jacobian(const State& state, int u, Eigen::Ref<Eigen::MatrixXd> out) const
    {
        out = stacked_jacobian(state, u);
    }

private:
    const models::MergedModel* model_;
    ParameterLayout layout_;
    SkeletonParamMap map_;
    std::vector<PriorEntry> priors_;
};

} // namespace fit
} // namespace unibody
