// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/models.hpp"

#include <fstream>
#include <sstream>

#include "ginnkan/fc.hpp"
#include "ginnkan/ginn.hpp"
#include "ginnkan/ginnkan.hpp"
#include "ginnkan/kan.hpp"

namespace ginnkan {

const std::vector<std::string>& model_kinds() {
  static const std::vector<std::string> kinds{"fc", "ginn", "kan", "ginn-kan"};
  return kinds;
}

std::unique_ptr<nn::Model> make_model(std::string_view kind, std::size_t input_dim, std::uint64_t seed) {
  if (kind == "fc") return std::make_unique<fc::FcModel>(input_dim, std::vector<std::size_t>{32, 32, 32, 32, 32}, seed);
  if (kind == "ginn") return std::make_unique<ginn::GinnModel>(input_dim, seed);
  if (kind == "kan") return std::make_unique<kan::KanModel>(input_dim, seed);
  if (kind == "ginn-kan") return std::make_unique<ginnkan_model::GinnKanModel>(input_dim, seed);
  throw nn::Error("unknown model kind '" + std::string(kind) + "' (expected fc, ginn, kan or ginn-kan)");
}

nn::Json checkpoint(const nn::Model& model, std::uint64_t seed) {
  return {{"format", "ginnkan-checkpoint"},
          {"version", 1},
          {"kind", model.kind()},
          {"input_dim", model.input_dim()},
          {"seed", seed},
          {"state", model.state()},
          {"parameters", model.parameters().to_json()}};
}

std::unique_ptr<nn::Model> restore(const nn::Json& j) {
  if (j.value("format", std::string()) != "ginnkan-checkpoint") throw nn::Error("not a checkpoint file");
  auto model = make_model(j.at("kind").get<std::string>(), j.at("input_dim").get<std::size_t>(),
                          j.at("seed").get<std::uint64_t>());
  model->parameters() = nn::ParameterStore::from_json(j.at("parameters"));
  model->load_state(j.at("state"));
  return model;
}

void save_checkpoint(const std::string& path, const nn::Model& model, std::uint64_t seed) {
  std::ofstream out(path);
  if (!out) throw nn::Error("cannot write checkpoint '" + path + "'");
  // 17 significant digits round-trip doubles exactly.
  out << checkpoint(model, seed).dump(1) << '\n';
  if (!out) throw nn::Error("failed writing checkpoint '" + path + "'");
}

std::unique_ptr<nn::Model> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw nn::Error("cannot read checkpoint '" + path + "'");
  nn::Json j;
  try {
    in >> j;
  } catch (const nn::Json::parse_error& e) {
    throw nn::Error("checkpoint '" + path + "' is not valid JSON: " + e.what());
  }
  return restore(j);
}

}  // namespace ginnkan
