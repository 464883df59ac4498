/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/fit/levenberg_marquardt.hpp
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

#include "Eigen/Cholesky"
#include "Eigen/Core"

#include <cmath>
#include <functional>
#include <sstream>
#include <string>

namespace unibody {
namespace fit {

struct LmOptions
{
    int max_iterations = 50;
    double gradient_tolerance = 1e-10; // max-norm of J^T r
    double step_tolerance = 1e-12;     // Euclidean norm of the accepted step
    double initial_damping_factor = 1e-8; // times max diagonal of J^T J
};

struct LmDiagnostics
{
    int iterations = 0;     // trial steps evaluated
    int accepted_steps = 0; // steps that decreased the cost
    double initial_cost = 0.0;
    double final_cost = 0.0;
    double final_gradient_norm = 0.0;
    std::string termination; // "gradient", "step", "max_iterations", "non_finite"
    bool aborted = false;
    std::string abort_state; // parameter dump when residuals go non-finite
};

/**
 * Dense Levenberg-Marquardt. The callable evaluates residuals and, when the
 * jacobian pointer is non-null, the residual jacobian:
 *
 *   f(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
 *     Eigen::MatrixXd* jacobian)
 *
 * Only cost-decreasing steps are accepted; damping scales the J^T J diagonal.
 * Non-finite residuals abort with a parameter dump in the diagnostics.
 */
template <typename Functor>
LmDiagnostics lm_minimize(Functor&& evaluate, Eigen::VectorXd& params,
                          const LmOptions& options = {})
{
    LmDiagnostics diag;
    const int p = static_cast<int>(params.size());

    Eigen::VectorXd residuals;
    Eigen::MatrixXd jacobian;
    evaluate(params, residuals, &jacobian);

    auto dump_state = [&](const Eigen::VectorXd& at) {
        std::ostringstream os;
        os << "params = [" << at.transpose() << "]";
        return os.str();
    };

    if (!residuals.allFinite())
    {
        diag.aborted = true;
        diag.termination = "non_finite";
        diag.abort_state = dump_state(params);
        return diag;
    }

    double cost = residuals.squaredNorm();
    diag.initial_cost = cost;

    Eigen::VectorXd gradient = jacobian.transpose() * residuals;
    Eigen::MatrixXd hessian = jacobian.transpose() * jacobian;
    double mu = options.initial_damping_factor * std::max(hessian.diagonal().maxCoeff(), 1e-12);

    diag.final_gradient_norm = gradient.template lpNorm<Eigen::Infinity>();
    if (diag.final_gradient_norm < options.gradient_tolerance)
    {
        diag.termination = "gradient";
        diag.final_cost = cost;
        return diag;
    }

    Eigen::VectorXd trial_residuals;
    diag.termination = "max_iterations";
    while (diag.iterations < options.max_iterations)
    {
        ++diag.iterations;

        Eigen::MatrixXd damped = hessian;
        damped.diagonal() += mu * hessian.diagonal().cwiseMax(1e-12);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(damped);
        if (ldlt.info() != Eigen::Success)
        {
            mu *= 4.0;
            continue;
        }
        const Eigen::VectorXd step = ldlt.solve(-gradient);
        const Eigen::VectorXd trial = params + step;

        evaluate(trial, trial_residuals, nullptr);
        if (!trial_residuals.allFinite())
        {
            diag.aborted = true;
            diag.termination = "non_finite";
            diag.abort_state = dump_state(trial);
            break;
        }
        const double trial_cost = trial_residuals.squaredNorm();

        if (trial_cost < cost)
        {
            params = trial;
            cost = trial_cost;
            ++diag.accepted_steps;
            mu = std::max(mu / 3.0, 1e-18);

            evaluate(params, residuals, &jacobian);
            gradient.noalias() = jacobian.transpose() * residuals;
            hessian.noalias() = jacobian.transpose() * jacobian;

            diag.final_gradient_norm = gradient.template lpNorm<Eigen::Infinity>();
            if (diag.final_gradient_norm < options.gradient_tolerance)
            {
                diag.termination = "gradient";
                break;
            }
            if (step.norm() < options.step_tolerance)
            {
                diag.termination = "step";
                break;
            }
        }
        else
        {
            mu *= 4.0;
            if (step.norm() < options.step_tolerance)
            {
                diag.termination = "step";
                break;
            }
        }
    }

    diag.final_cost = cost;
    diag.final_gradient_norm = gradient.template lpNorm<Eigen::Infinity>();
    return diag;
}

} // namespace fit
} // namespace unibody
