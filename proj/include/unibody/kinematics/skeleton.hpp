/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/kinematics/skeleton.hpp
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

#include "Eigen/Core"
#include "Eigen/SparseCore"

#include <stdexcept>
#include <string>
#include <vector>

namespace unibody {
namespace kinematics {

enum class RotationType
{
    angle_axis,
    euler_xyz
};

struct Joint
{
    std::string name;
    int parent = -1; // -1 marks the root
    Eigen::Vector3d offset = Eigen::Vector3d::Zero(); // rest offset from parent, meters
    RotationType rotation = RotationType::angle_axis;
    bool scalable = false; // has a per-axis scale factor (pose-like parameter, rest value 1)
};

/**
 * A joint hierarchy. Joints are topologically sorted (parent index strictly
 * below own index) with exactly one root.
 */
struct Skeleton
{
    std::vector<Joint> joints;

    int num_joints() const { return static_cast<int>(joints.size()); }

    int num_scalable() const
    {
        int n = 0;
        for (const auto& j : joints)
            n += j.scalable ? 1 : 0;
        return n;
    }

    /// Rest-pose joint positions in world coordinates (chained offsets).
    std::vector<Eigen::Vector3d> rest_positions() const
    {
        std::vector<Eigen::Vector3d> pos(joints.size());
        for (std::size_t j = 0; j < joints.size(); ++j)
            pos[j] = joints[j].parent < 0 ? joints[j].offset
                                          : pos[joints[j].parent] + joints[j].offset;
        return pos;
    }

    int find(const std::string& name) const
    {
        for (int j = 0; j < num_joints(); ++j)
            if (joints[j].name == name)
                return j;
        return -1;
    }
};

inline void validate(const Skeleton& skeleton)
{
    int roots = 0;
    for (int j = 0; j < skeleton.num_joints(); ++j)
    {
        const int parent = skeleton.joints[j].parent;
        if (parent < 0)
            ++roots;
        else if (parent >= j)
            throw std::invalid_argument("Skeleton: joints must be topologically sorted (joint " +
                                        std::to_string(j) + ")");
    }
    if (roots != 1)
        throw std::invalid_argument("Skeleton: expected exactly one root, got " +
                                    std::to_string(roots));
}

/**
 * Sparse nonnegative vertex-to-joint weights; each row sums to one with at
 * most `max_influences` nonzeros.
 */
struct SkinningWeights
{
    Eigen::SparseMatrix<double, Eigen::RowMajor> matrix; // N x J

    int num_vertices() const { return static_cast<int>(matrix.rows()); }
    int num_joints() const { return static_cast<int>(matrix.cols()); }
};

inline void validate(const SkinningWeights& weights, int max_influences = 8)
{
    for (int i = 0; i < weights.matrix.rows(); ++i)
    {
        double sum = 0.0;
        int nnz = 0;
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(weights.matrix, i); it;
             ++it)
        {
            if (it.value() < 0.0)
                throw std::invalid_argument("SkinningWeights: negative weight at vertex " +
                                            std::to_string(i));
            sum += it.value();
            ++nnz;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw std::invalid_argument("SkinningWeights: row " + std::to_string(i) +
                                        " sums to " + std::to_string(sum));
        if (nnz > max_influences)
            throw std::invalid_argument("SkinningWeights: row " + std::to_string(i) + " has " +
                                        std::to_string(nnz) + " influences (max " +
                                        std::to_string(max_influences) + ")");
    }
}

} // namespace kinematics
} // namespace unibody
