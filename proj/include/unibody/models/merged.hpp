/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/models/merged.hpp
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
#include "unibody/kinematics/forward.hpp"
#include "unibody/measure/keypoints.hpp"
#include "unibody/models/part_models.hpp"

#include "Eigen/Core"
#include "Eigen/SparseCore"

#include <stdexcept>
#include <vector>

namespace unibody {
namespace models {

/**
 * The merged single-parameterization model: one skeleton spanning body and
 * hands, one joint shape space over all vertices, and the face expression
 * basis carried over (nonzero only on face-region vertices). The skeleton
 * has no seam constraints and no per-bone scales.
 */
struct MergedModel
{
    core::Mesh mean;             // unified topology
    Eigen::MatrixXd shape_basis; // 3N x K
    Eigen::MatrixXd expression_basis; // 3N x K_expr
    kinematics::Skeleton skeleton;    // body + both hand chains
    kinematics::SkinningWeights weights;
    Eigen::SparseMatrix<double, Eigen::RowMajor> joint_regressor; // J x N
    measure::KeypointRegressor keypoints;
    std::vector<int> icp_mask;

    int num_vertices() const { return mean.num_vertices(); }
    int num_shape_coefficients() const { return static_cast<int>(shape_basis.cols()); }
    int num_expression() const { return static_cast<int>(expression_basis.cols()); }
};

inline void validate(const MergedModel& model)
{
    validate(model.mean);
    validate(model.skeleton);
    validate(model.weights);
    if (model.shape_basis.rows() != 3 * model.num_vertices() ||
        model.expression_basis.rows() != 3 * model.num_vertices())
        throw std::invalid_argument("MergedModel: basis rows must be 3x vertex count");
    if (model.weights.num_vertices() != model.num_vertices() ||
        model.weights.num_joints() != model.skeleton.num_joints())
        throw std::invalid_argument("MergedModel: skinning weight dimensions mismatch");
    if (model.joint_regressor.rows() != model.skeleton.num_joints() ||
        model.joint_regressor.cols() != model.num_vertices())
        throw std::invalid_argument("MergedModel: joint regressor dimensions mismatch");
}

inline fit::ParameterLayout merged_layout(const MergedModel& model)
{
    fit::ParameterLayout layout;
    layout.add("pose", 3 * model.skeleton.num_joints())
        .add("expression", model.num_expression())
        .add("shape", model.num_shape_coefficients())
        .add("translation", 3);
    return layout;
}

struct MergedState
{
    Eigen::VectorXd params;
    std::vector<Eigen::Vector3d> rest; // shape + expression displaced
    kinematics::FkResult fk;
    std::vector<Eigen::Vector3d> vertices;
};

inline MergedState evaluate_merged(const MergedModel& model, const Eigen::VectorXd& params)
{
    const fit::ParameterLayout layout = merged_layout(model);
    if (params.size() != layout.size())
        throw std::invalid_argument("evaluate_merged: parameter vector size mismatch");

    MergedState state;
    state.params = params;
    const Eigen::VectorXd shape = layout.segment(params, "shape");
    const Eigen::VectorXd expression = layout.segment(params, "expression");

    state.rest = shaped_rest_vertices(model.mean, model.shape_basis, shape);
    if (expression.size() > 0)
    {
        const Eigen::VectorXd disp = model.expression_basis * expression;
        for (int i = 0; i < model.num_vertices(); ++i)
            state.rest[i] += disp.segment<3>(3 * i);
    }

    // Joints follow the shape space but not the expression.
    const auto shape_only = shaped_rest_vertices(model.mean, model.shape_basis, shape);
    const auto joints = regress_joints(model.joint_regressor, shape_only);
    const auto offsets = offsets_from_positions(model.skeleton, joints);
    state.fk =
        kinematics::forward_kinematics(model.skeleton, layout.segment(params, "pose"),
                                       Eigen::VectorXd(), layout.segment(params, "translation"),
                                       &offsets);
    state.vertices = kinematics::skin_vertices(state.rest, model.weights, state.fk.rest_to_posed);
    return state;
}

inline core::Mesh merged_mesh(const MergedModel& model, const Eigen::VectorXd& params)
{
    core::Mesh mesh;
    mesh.vertices = evaluate_merged(model, params).vertices;
    mesh.triangles = model.mean.triangles;
    return mesh;
}

} // namespace models
} // namespace unibody
