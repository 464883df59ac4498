/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/fit/fit_frame.hpp
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

#include "unibody/core/point_cloud.hpp"
#include "unibody/fit/levenberg_marquardt.hpp"
#include "unibody/fit/model_jacobians.hpp"
#include "unibody/measure/keypoints.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace unibody {
namespace fit {

/// Weights, thresholds, and iteration caps of the staged fit.
struct FitConfig
{
    double lambda_keypoints = 1.0;
    double lambda_icp = 1.0;
    double lambda_seam = 1.0;
    double lambda_candidates = 0.5;

    double prior_pose = 1e-2;
    double prior_shape = 1e-1;
    double prior_scale = 1.0;
    double stage_a_prior_multiplier = 100.0;

    double icp_max_dist = 0.05;               // meters
    double icp_max_normal_angle = M_PI / 3.0; // radians
    int icp_outer_rounds = 2;

    int stage_a_iterations = 40;
    int stage_b_iterations = 60;
    int stage_c_iterations = 40;

    double triangulation_confidence = 0.3;
};

inline void validate(const FitConfig& config)
{
    if (config.lambda_keypoints < 0 || config.lambda_icp < 0 || config.lambda_seam < 0 ||
        config.lambda_candidates < 0 || config.prior_pose < 0 || config.prior_shape < 0 ||
        config.prior_scale < 0)
        throw std::invalid_argument("FitConfig: weights must be nonnegative");
    if (config.icp_outer_rounds < 1)
        throw std::invalid_argument("FitConfig: icp_outer_rounds must be at least 1");
}

inline void from_json_overlay(const nlohmann::json& j, FitConfig& config)
{
    config.lambda_keypoints = j.value("lambda_keypoints", config.lambda_keypoints);
    config.lambda_icp = j.value("lambda_icp", config.lambda_icp);
    config.lambda_seam = j.value("lambda_seam", config.lambda_seam);
    config.lambda_candidates = j.value("lambda_candidates", config.lambda_candidates);
    config.prior_pose = j.value("prior_pose", config.prior_pose);
    config.prior_shape = j.value("prior_shape", config.prior_shape);
    config.prior_scale = j.value("prior_scale", config.prior_scale);
    config.stage_a_prior_multiplier =
        j.value("stage_a_prior_multiplier", config.stage_a_prior_multiplier);
    config.icp_max_dist = j.value("icp_max_dist", config.icp_max_dist);
    config.icp_max_normal_angle = j.value("icp_max_normal_angle", config.icp_max_normal_angle);
    config.icp_outer_rounds = j.value("icp_outer_rounds", config.icp_outer_rounds);
    config.stage_a_iterations = j.value("stage_a_iterations", config.stage_a_iterations);
    config.stage_b_iterations = j.value("stage_b_iterations", config.stage_b_iterations);
    config.stage_c_iterations = j.value("stage_c_iterations", config.stage_c_iterations);
    config.triangulation_confidence =
        j.value("triangulation_confidence", config.triangulation_confidence);
    validate(config);
}

inline nlohmann::json to_json(const FitConfig& c)
{
    return {{"lambda_keypoints", c.lambda_keypoints},
            {"lambda_icp", c.lambda_icp},
            {"lambda_seam", c.lambda_seam},
            {"lambda_candidates", c.lambda_candidates},
            {"prior_pose", c.prior_pose},
            {"prior_shape", c.prior_shape},
            {"prior_scale", c.prior_scale},
            {"stage_a_prior_multiplier", c.stage_a_prior_multiplier},
            {"icp_max_dist", c.icp_max_dist},
            {"icp_max_normal_angle", c.icp_max_normal_angle},
            {"icp_outer_rounds", c.icp_outer_rounds},
            {"stage_a_iterations", c.stage_a_iterations},
            {"stage_b_iterations", c.stage_b_iterations},
            {"stage_c_iterations", c.stage_c_iterations},
            {"triangulation_confidence", c.triangulation_confidence}};
}

/// Extra per-vertex surface targets (the temporal smoother's propagated
/// candidates).
struct CandidateTargets
{
    std::vector<std::pair<int, Eigen::Vector3d>> targets; // (unified vertex, position)
};

struct StageDiagnostics
{
    std::string name;
    LmDiagnostics lm;
    std::map<std::string, double> term_costs;
    std::vector<int> icp_matches; // per outer round (stage C only)
};

struct FitResult
{
    Eigen::VectorXd params;
    ParameterLayout layout;
    std::map<std::string, double> term_costs;
    double total_cost = 0.0;
    std::vector<StageDiagnostics> stages;
    std::vector<std::string> warnings;
};

namespace detail {

struct IcpItem
{
    int vertex;
    Eigen::Vector3d point;
    Eigen::Vector3d normal;
};

/// One stage's residual set over a model adapter.
template <typename Adapter>
class StageProblem
{
public:
    StageProblem(const Adapter& adapter, const FitConfig& config)
        : adapter_(&adapter), config_(&config)
    {
    }

    std::vector<std::pair<int, Eigen::Vector3d>> keypoint_items; // (regressor row, target)
    std::vector<IcpItem> icp_items;
    bool use_seams = false;
    double prior_multiplier = 1.0;
    std::vector<std::pair<int, Eigen::Vector3d>> candidate_items; // (vertex, position)

    int residual_count() const
    {
        const int seam_rows = use_seams ? static_cast<int>(adapter_->seams().size()) * 3 : 0;
        return 3 * static_cast<int>(keypoint_items.size()) +
               static_cast<int>(icp_items.size()) + seam_rows +
               static_cast<int>(adapter_->prior_entries().size()) +
               3 * static_cast<int>(candidate_items.size());
    }

    /// Residual layout: [keypoints | icp | seams | prior | candidates].
    void operator()(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                    Eigen::MatrixXd* jacobian) const
    {
        const auto state = adapter_->evaluate(params);
        const int rows = residual_count();
        const int cols = static_cast<int>(params.size());
        residuals.setZero(rows);
        if (jacobian)
            jacobian->setZero(rows, cols);

        const auto& vertices = adapter_->vertices(state);
        const auto& stacked = adapter_->stacked(state);
        const auto& regressor = adapter_->keypoints();
        Eigen::MatrixXd vertex_jac(3, cols);

        int row = 0;
        const double sk = std::sqrt(config_->lambda_keypoints);
        for (const auto& [k, target] : keypoint_items)
        {
            Eigen::Vector3d predicted = Eigen::Vector3d::Zero();
            if (jacobian)
                vertex_jac.setZero();
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(regressor.rows,
                                                                                k);
                 it; ++it)
            {
                predicted += it.value() * vertices[it.col()];
                if (jacobian)
                    accumulate_unified(state, it.col(), it.value(), vertex_jac);
            }
            residuals.segment<3>(row) = sk * (predicted - target);
            if (jacobian)
                jacobian->middleRows<3>(row) = sk * vertex_jac;
            row += 3;
        }

        const double si = std::sqrt(config_->lambda_icp);
        for (const auto& item : icp_items)
        {
            residuals[row] = si * item.normal.dot(item.point - vertices[item.vertex]);
            if (jacobian)
            {
                vertex_jac.setZero();
                accumulate_unified(state, item.vertex, 1.0, vertex_jac);
                jacobian->row(row) = -si * (item.normal.transpose() * vertex_jac);
            }
            ++row;
        }

        if (use_seams)
        {
            const double ss = std::sqrt(config_->lambda_seam);
            const auto& body_triangles = adapter_->seam_triangles();
            for (const auto& seam : adapter_->seams())
            {
                const auto& tri = body_triangles[seam.anchor.triangle];
                Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
                for (int c = 0; c < 3; ++c)
                    anchor += seam.anchor.barycentric[c] * stacked[tri[c]];
                residuals.segment<3>(row) =
                    ss * seam.weight * (stacked[seam.part_vertex] - anchor);
                if (jacobian)
                {
                    vertex_jac = adapter_->stacked_jacobian(state, seam.part_vertex);
                    for (int c = 0; c < 3; ++c)
                        vertex_jac -= seam.anchor.barycentric[c] *
                                      adapter_->stacked_jacobian(state, tri[c]);
                    jacobian->middleRows<3>(row) = ss * seam.weight * vertex_jac;
                }
                row += 3;
            }
        }

        for (const auto& entry : adapter_->prior_entries())
        {
            const double w = prior_multiplier * prior_weight(entry.kind);
            residuals[row] = w * (params[entry.index] - entry.mean);
            if (jacobian)
                (*jacobian)(row, entry.index) = w;
            ++row;
        }

        const double sc = std::sqrt(config_->lambda_candidates);
        for (const auto& [vertex, position] : candidate_items)
        {
            residuals.segment<3>(row) = sc * (vertices[vertex] - position);
            if (jacobian)
            {
                vertex_jac.setZero();
                accumulate_unified(state, vertex, 1.0, vertex_jac);
                jacobian->middleRows<3>(row) = sc * vertex_jac;
            }
            row += 3;
        }
    }

    /// Squared-norm cost of each term, from one residual vector.
    std::map<std::string, double> term_costs(const Eigen::VectorXd& residuals) const
    {
        std::map<std::string, double> costs;
        int row = 0;
        auto take = [&](const char* name, int count) {
            costs[name] = residuals.segment(row, count).squaredNorm();
            row += count;
        };
        take("keypoints", 3 * static_cast<int>(keypoint_items.size()));
        take("icp", static_cast<int>(icp_items.size()));
        take("seam", use_seams ? 3 * static_cast<int>(adapter_->seams().size()) : 0);
        take("prior", static_cast<int>(adapter_->prior_entries().size()));
        take("candidates", 3 * static_cast<int>(candidate_items.size()));
        return costs;
    }

private:
    double prior_weight(PriorKind kind) const
    {
        switch (kind)
        {
        case PriorKind::pose: return config_->prior_pose;
        case PriorKind::shape: return config_->prior_shape;
        case PriorKind::scale: return config_->prior_scale;
        }
        return 0.0;
    }

    void accumulate_unified(const typename Adapter::State& state, int u, double coeff,
                            Eigen::Ref<Eigen::MatrixXd> out) const
    {
        if constexpr (std::is_same_v<Adapter, UnifiedAdapter>)
        {
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                     adapter_->model().blend, u);
                 it; ++it)
                out += coeff * it.value() * adapter_->stacked_jacobian(state, it.col());
        }
        else
        {
            out += coeff * adapter_->stacked_jacobian(state, u);
        }
    }

    const Adapter* adapter_;
    const FitConfig* config_;
};

/// Restricts a problem to a parameter subset, freezing the rest at a base
/// state. Stage A works on the root rotation and translation only; the other
/// parameters sit at their prior means (or the caller's init), which is the
/// strong-prior limit.
template <typename Inner>
struct SubsetProblem
{
    const Inner* inner;
    const Eigen::VectorXd* base;
    std::vector<int> indices;

    void operator()(const Eigen::VectorXd& reduced, Eigen::VectorXd& residuals,
                    Eigen::MatrixXd* jacobian) const
    {
        Eigen::VectorXd full = *base;
        for (std::size_t i = 0; i < indices.size(); ++i)
            full[indices[i]] = reduced[i];
        if (!jacobian)
        {
            (*inner)(full, residuals, nullptr);
            return;
        }
        Eigen::MatrixXd full_jacobian;
        (*inner)(full, residuals, &full_jacobian);
        jacobian->resize(full_jacobian.rows(), static_cast<int>(indices.size()));
        for (std::size_t i = 0; i < indices.size(); ++i)
            jacobian->col(i) = full_jacobian.col(indices[i]);
    }
};

/// Rigid alignment (Kabsch) of matched point pairs: b ~ R a + t.
inline void kabsch(const std::vector<Eigen::Vector3d>& a, const std::vector<Eigen::Vector3d>& b,
                   Eigen::Matrix3d& rotation, Eigen::Vector3d& translation)
{
    Eigen::Vector3d ca = Eigen::Vector3d::Zero(), cb = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        ca += a[i];
        cb += b[i];
    }
    ca /= static_cast<double>(a.size());
    cb /= static_cast<double>(a.size());
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    for (std::size_t i = 0; i < a.size(); ++i)
        h += (a[i] - ca) * (b[i] - cb).transpose();
    const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    rotation = svd.matrixV() * d * svd.matrixU().transpose();
    translation = cb - rotation * ca;
}

} // namespace detail

/**
 * Staged fit of one measurement frame: torso-only keypoints under strong
 * priors first, then all keypoints with relaxed priors, then the point-to
 * plane term with correspondences refreshed between outer rounds. Seam
 * residuals participate whenever the model has seams. Without an init, the
 * four torso keypoints bootstrap the global rotation and translation.
 */
template <typename Adapter>
FitResult fit_model_frame(const Adapter& adapter, const measure::MeasurementFrame& frame,
                          const FitConfig& config,
                          const std::optional<Eigen::VectorXd>& init = std::nullopt,
                          const CandidateTargets* candidates = nullptr)
{
    validate(config);
    validate(frame);
    const auto& regressor = adapter.keypoints();

    FitResult result;
    result.layout = adapter.layout();

    // Match measured keypoints to regressor rows.
    std::vector<std::pair<int, Eigen::Vector3d>> matched;
    std::vector<std::pair<int, Eigen::Vector3d>> torso;
    for (const auto& kp : frame.keypoints)
    {
        const int row = regressor.row_of(kp.id);
        if (row < 0)
        {
            result.warnings.push_back("unknown keypoint id skipped: " + kp.id);
            continue;
        }
        matched.emplace_back(row, kp.position);
        for (const auto& tid : measure::torso_keypoint_ids())
            if (kp.id == tid)
                torso.emplace_back(row, kp.position);
    }

    Eigen::VectorXd params;
    if (init)
    {
        if (init->size() != adapter.layout().size())
            throw std::invalid_argument("fit_model_frame: init size mismatch");
        params = *init;
    }
    else
    {
        if (torso.size() < measure::torso_keypoint_ids().size())
            throw std::runtime_error(
                "fit_model_frame: cold start requires all four torso keypoints");
        params = adapter.neutral_parameters();
        const auto rest_state = adapter.evaluate(params);
        const auto rest_targets = regressor.predict(adapter.vertices(rest_state));
        std::vector<Eigen::Vector3d> from, to;
        for (const auto& [row, position] : torso)
        {
            from.push_back(rest_targets[row]);
            to.push_back(position);
        }
        Eigen::Matrix3d r;
        Eigen::Vector3d t;
        detail::kabsch(from, to, r, t);
        // The root rotation acts about the root joint, so fold the pivot into
        // the global translation.
        const Eigen::Vector3d pivot = adapter.root_rest_position();
        const std::string root_block = adapter.layout().has("body_pose") ? "body_pose" : "pose";
        Eigen::VectorXd pose = adapter.layout().segment(params, root_block);
        pose.segment<3>(0) = kinematics::matrix_to_angle_axis(r);
        adapter.layout().segment(params, root_block) = pose;
        adapter.layout().segment(params, "translation") = t + r * pivot - pivot;
    }

    std::optional<core::PointCloudIndex> cloud_index;
    const bool with_icp = !frame.cloud.empty() && config.lambda_icp > 0.0;
    if (with_icp)
        cloud_index.emplace(frame.cloud, config.icp_max_dist);
    const std::vector<int>& mask = frame.icp_mask ? *frame.icp_mask : adapter.icp_mask();
    std::vector<bool> masked(adapter.num_vertices(), false);
    for (const int v : mask)
        masked[v] = true;

    auto search_correspondences = [&](const Eigen::VectorXd& at) {
        std::vector<detail::IcpItem> items;
        const auto state = adapter.evaluate(at);
        core::Mesh posed;
        posed.vertices = adapter.vertices(state);
        posed.triangles = adapter.triangles();
        const auto normals = core::compute_vertex_normals(posed);
        for (int u = 0; u < adapter.num_vertices(); ++u)
        {
            if (masked[u] || normals.normals[u].norm() == 0.0)
                continue;
            const auto hit = cloud_index->closest_compatible_point(
                posed.vertices[u], normals.normals[u], config.icp_max_dist,
                config.icp_max_normal_angle);
            if (hit)
                items.push_back({u, frame.cloud.points[*hit], frame.cloud.normals[*hit]});
        }
        return items;
    };

    auto run_stage = [&](const std::string& name, detail::StageProblem<Adapter>& problem,
                         int iterations) {
        LmOptions options;
        options.max_iterations = iterations;
        StageDiagnostics diag;
        diag.name = name;
        diag.lm = lm_minimize(problem, params, options);
        Eigen::VectorXd residuals;
        problem(params, residuals, nullptr);
        diag.term_costs = problem.term_costs(residuals);
        result.stages.push_back(diag);
        if (diag.lm.aborted)
            result.warnings.push_back("stage " + name + " aborted: non-finite residuals");
    };

    // Stage A: global rotation/translation from the torso keypoints, every
    // other parameter pinned (the strong-prior limit), no ICP.
    {
        detail::StageProblem<Adapter> problem(adapter, config);
        problem.keypoint_items = torso;
        problem.use_seams = adapter.has_seams();
        problem.prior_multiplier = config.stage_a_prior_multiplier;

        detail::SubsetProblem<detail::StageProblem<Adapter>> subset;
        subset.inner = &problem;
        subset.base = &params;
        const std::string root_block =
            adapter.layout().has("body_pose") ? "body_pose" : "pose";
        const auto& pose_block = adapter.layout().block(root_block);
        const auto& translation_block = adapter.layout().block("translation");
        for (int i = 0; i < 3; ++i)
            subset.indices.push_back(pose_block.offset + i);
        for (int i = 0; i < translation_block.size; ++i)
            subset.indices.push_back(translation_block.offset + i);

        Eigen::VectorXd reduced(subset.indices.size());
        for (std::size_t i = 0; i < subset.indices.size(); ++i)
            reduced[i] = params[subset.indices[i]];

        LmOptions options;
        options.max_iterations = config.stage_a_iterations;
        StageDiagnostics diag;
        diag.name = "torso";
        diag.lm = lm_minimize(subset, reduced, options);
        for (std::size_t i = 0; i < subset.indices.size(); ++i)
            params[subset.indices[i]] = reduced[i];
        Eigen::VectorXd residuals;
        problem(params, residuals, nullptr);
        diag.term_costs = problem.term_costs(residuals);
        result.stages.push_back(diag);
        if (diag.lm.aborted)
            result.warnings.push_back("stage torso aborted: non-finite residuals");
    }

    // Stage B: all keypoints, relaxed priors.
    detail::StageProblem<Adapter> stage_b(adapter, config);
    stage_b.keypoint_items = matched;
    stage_b.use_seams = adapter.has_seams();
    if (candidates)
        stage_b.candidate_items = candidates->targets;
    run_stage("keypoints", stage_b, config.stage_b_iterations);

    // Stage C: plus point-to-plane, refreshing correspondences per round.
    if (with_icp)
    {
        for (int round = 0; round < config.icp_outer_rounds; ++round)
        {
            detail::StageProblem<Adapter> problem(adapter, config);
            problem.keypoint_items = matched;
            problem.use_seams = adapter.has_seams();
            if (candidates)
                problem.candidate_items = candidates->targets;
            problem.icp_items = search_correspondences(params);
            run_stage("icp_round_" + std::to_string(round + 1), problem,
                      config.stage_c_iterations);
            result.stages.back().icp_matches.push_back(
                static_cast<int>(problem.icp_items.size()));
        }
    }

    // Final bookkeeping off the last stage's residual structure.
    {
        detail::StageProblem<Adapter> final_problem(adapter, config);
        final_problem.keypoint_items = matched;
        final_problem.use_seams = adapter.has_seams();
        if (candidates)
            final_problem.candidate_items = candidates->targets;
        if (with_icp)
            final_problem.icp_items = search_correspondences(params);
        Eigen::VectorXd residuals;
        final_problem(params, residuals, nullptr);
        result.term_costs = final_problem.term_costs(residuals);
        result.total_cost = 0.0;
        for (const auto& [name, cost] : result.term_costs)
            result.total_cost += cost;
    }
    result.params = params;
    return result;
}

/// Stitched-model frame fit (keypoint + ICP + seam + prior objective).
inline FitResult fit_frame(const models::UnifiedModel& model,
                           const measure::MeasurementFrame& frame, const FitConfig& config,
                           const std::optional<Eigen::VectorXd>& init = std::nullopt,
                           const CandidateTargets* candidates = nullptr)
{
    const UnifiedAdapter adapter(model);
    return fit_model_frame(adapter, frame, config, init, candidates);
}

/// Merged-model frame fit: same staging without the seam term.
inline FitResult fit_merged_frame(const models::MergedModel& model,
                                  const measure::MeasurementFrame& frame, const FitConfig& config,
                                  const std::optional<Eigen::VectorXd>& init = std::nullopt,
                                  const CandidateTargets* candidates = nullptr)
{
    const MergedAdapter adapter(model);
    return fit_model_frame(adapter, frame, config, init, candidates);
}

// --- FitResult serialization -------------------------------------------------

inline nlohmann::json to_json(const FitResult& result)
{
    nlohmann::json params;
    for (const auto& block : result.layout.blocks)
    {
        std::vector<double> values(block.size);
        for (int i = 0; i < block.size; ++i)
            values[i] = result.params[block.offset + i];
        params[block.name] = values;
    }
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& stage : result.stages)
        stages.push_back({{"name", stage.name},
                          {"iterations", stage.lm.iterations},
                          {"accepted_steps", stage.lm.accepted_steps},
                          {"final_cost", stage.lm.final_cost},
                          {"gradient_norm", stage.lm.final_gradient_norm},
                          {"termination", stage.lm.termination},
                          {"term_costs", stage.term_costs},
                          {"icp_matches", stage.icp_matches}});
    return {{"params", params},
            {"term_costs", result.term_costs},
            {"total_cost", result.total_cost},
            {"stages", stages},
            {"warnings", result.warnings}};
}

/// Rebuilds the flat parameter vector of a serialized fit against a layout.
inline Eigen::VectorXd params_from_json(const nlohmann::json& j, const ParameterLayout& layout)
{
    Eigen::VectorXd params = Eigen::VectorXd::Zero(layout.size());
    for (const auto& block : layout.blocks)
    {
        const auto values = j.at("params").at(block.name).get<std::vector<double>>();
        if (static_cast<int>(values.size()) != block.size)
            throw std::invalid_argument("fit result: block " + block.name + " size mismatch");
        for (int i = 0; i < block.size; ++i)
            params[block.offset + i] = values[i];
    }
    return params;
}

} // namespace fit
} // namespace unibody
