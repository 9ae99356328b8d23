// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ginnkan/nn.hpp"

namespace ginnkan {

/// "fc", "ginn", "kan", "ginn-kan".
const std::vector<std::string>& model_kinds();
std::unique_ptr<nn::Model> make_model(std::string_view kind, std::size_t input_dim, std::uint64_t seed = 0);

/// Checkpoint: kind, input size, seed, model state and every parameter
/// tensor with its Adam moments, as one JSON document.
nn::Json checkpoint(const nn::Model& model, std::uint64_t seed);
std::unique_ptr<nn::Model> restore(const nn::Json& j);
void save_checkpoint(const std::string& path, const nn::Model& model, std::uint64_t seed);
std::unique_ptr<nn::Model> load_checkpoint(const std::string& path);

}  // namespace ginnkan
