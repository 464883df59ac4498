/*
 * unibody - a deformable whole-body model fitting library in modern C++.
 *
 * File: include/unibody/fit/parameter_blocks.hpp
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

#include <stdexcept>
#include <string>
#include <vector>

namespace unibody {
namespace fit {

/**
 * Names the segments of a flat parameter vector. Blocks are contiguous, non
 * overlapping, and cover the vector exactly.
 */
struct ParameterLayout
{
    struct Block
    {
        std::string name;
        int offset = 0;
        int size = 0;
    };

    std::vector<Block> blocks;

    int size() const { return blocks.empty() ? 0 : blocks.back().offset + blocks.back().size; }

    ParameterLayout& add(const std::string& name, int block_size)
    {
        blocks.push_back({name, size(), block_size});
        return *this;
    }

    bool has(const std::string& name) const
    {
        for (const auto& b : blocks)
            if (b.name == name)
                return true;
        return false;
    }

    const Block& block(const std::string& name) const
    {
        for (const auto& b : blocks)
            if (b.name == name)
                return b;
        throw std::invalid_argument("ParameterLayout: unknown block '" + name + "'");
    }

    Eigen::VectorBlock<const Eigen::VectorXd> segment(const Eigen::VectorXd& params,
                                                      const std::string& name) const
    {
        const Block& b = block(name);
        if (params.size() != size())
            throw std::invalid_argument("ParameterLayout: parameter vector size mismatch");
        return params.segment(b.offset, b.size);
    }

    Eigen::VectorBlock<Eigen::VectorXd> segment(Eigen::VectorXd& params,
                                                const std::string& name) const
    {
        const Block& b = block(name);
        if (params.size() != size())
            throw std::invalid_argument("ParameterLayout: parameter vector size mismatch");
        return params.segment(b.offset, b.size);
    }
};

inline void validate(const ParameterLayout& layout)
{
    int cursor = 0;
    for (const auto& b : layout.blocks)
    {
        if (b.offset != cursor || b.size < 0)
            throw std::invalid_argument("ParameterLayout: blocks must tile the vector exactly");
        cursor += b.size;
    }
}

} // namespace fit
} // namespace unibody
