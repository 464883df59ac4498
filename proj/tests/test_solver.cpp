/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: tests/test_solver.cpp
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
#include "unibody/fit/levenberg_marquardt.hpp"
#include "unibody/fit/parameter_blocks.hpp"

#include "catch_amalgamated.hpp"

#include <random>

using namespace unibody::fit;

TEST_CASE("parameter layout tiles and slices", "[layout]")
{
    ParameterLayout layout;
    layout.add("pose", 6).add("shape", 3).add("translation", 3);
    validate(layout);
    CHECK(layout.size() == 12);
    CHECK(layout.block("shape").offset == 6);
    CHECK(layout.has("pose"));
    CHECK_FALSE(layout.has("unknown"));

    Eigen::VectorXd params = Eigen::VectorXd::LinSpaced(12, 0, 11);
    CHECK(layout.segment(params, "translation")[0] == 9.0);
    CHECK_THROWS_AS(layout.block("nope"), std::invalid_argument);

    ParameterLayout broken;
    broken.blocks = {{"a", 0, 2}, {"b", 3, 1}};
    CHECK_THROWS_AS(validate(broken), std::invalid_argument);
}

TEST_CASE("lm solves linear least squares in at most two accepted steps", "[lm]")
{
    std::mt19937_64 rng(2);
    std::normal_distribution<double> gauss;
    Eigen::MatrixXd a(20, 5);
    Eigen::VectorXd b(20);
    for (int i = 0; i < 20; ++i)
    {
        b[i] = gauss(rng);
        for (int j = 0; j < 5; ++j)
            a(i, j) = gauss(rng);
    }
    const Eigen::VectorXd expected = (a.transpose() * a).ldlt().solve(a.transpose() * b);

    auto functor = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r = a * x - b;
        if (jac)
            *jac = a;
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
    const auto diag = lm_minimize(functor, x);
    CHECK(diag.accepted_steps <= 2);
    CHECK((x - expected).norm() < 1e-8);
    CHECK_FALSE(diag.aborted);
}

TEST_CASE("lm reaches the Rosenbrock minimum", "[lm]")
{
    auto functor = [](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(2);
        r[0] = 10.0 * (x[1] - x[0] * x[0]);
        r[1] = 1.0 - x[0];
        if (jac)
        {
            jac->resize(2, 2);
            (*jac)(0, 0) = -20.0 * x[0];
            (*jac)(0, 1) = 10.0;
            (*jac)(1, 0) = -1.0;
            (*jac)(1, 1) = 0.0;
        }
    };

    Eigen::VectorXd x(2);
    x << -1.2, 1.0;
    LmOptions options;
    options.max_iterations = 200;
    const auto diag = lm_minimize(functor, x, options);
    CHECK(diag.final_cost < 1e-12);
    CHECK((x - Eigen::Vector2d(1.0, 1.0)).norm() < 1e-6);
}

TEST_CASE("lm takes no step from an optimal start", "[lm]")
{
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(3, 3);
    Eigen::VectorXd b(3);
    b << 1, 2, 3;
    auto functor = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r = a * x - b;
        if (jac)
            *jac = a;
    };
    Eigen::VectorXd x = b;
    const auto diag = lm_minimize(functor, x);
    CHECK(diag.accepted_steps == 0);
    CHECK(diag.termination == "gradient");
    CHECK((x - b).norm() == 0.0);
}

TEST_CASE("lm never accepts a cost increase", "[lm][property]")
{
    // Wavy 1D landscape; jacobian evaluations happen exactly at accepted
    // iterates, so their costs must be nonincreasing.
    std::vector<double> costs;
    auto functor = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
        r.resize(1);
        r[0] = std::sin(3.0 * x[0]) + 0.5 * x[0];
        if (jac)
        {
            jac->resize(1, 1);
            (*jac)(0, 0) = 3.0 * std::cos(3.0 * x[0]) + 0.5;
            costs.push_back(r.squaredNorm());
        }
    };
    Eigen::VectorXd x(1);
    x << 2.3;
    lm_minimize(functor, x);
    REQUIRE(costs.size() > 1);
    for (std::size_t i = 1; i < costs.size(); ++i)
        CHECK(costs[i] <= costs[i - 1] + 1e-15);
}

TEST_CASE("lm aborts on non-finite residuals with a state dump", "[lm]")
{
    auto functor = [](const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd*) {
        r.resize(1);
        r[0] = std::numeric_limits<double>::quiet_NaN();
        (void)x;
    };
    Eigen::VectorXd x(2);
    x << 0.5, -0.25;
    const auto diag = lm_minimize(functor, x);
    CHECK(diag.aborted);
    CHECK(diag.termination == "non_finite");
    CHECK(diag.abort_state.find("0.5") != std::string::npos);
}
