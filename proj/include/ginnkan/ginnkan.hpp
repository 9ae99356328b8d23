// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "ginnkan/ginn.hpp"
#include "ginnkan/kan.hpp"

namespace ginnkan::ginnkan_model {

/// u = alpha * g + beta, mapping a GINN output onto the KAN grid range.
struct Normalizer {
  double alpha = 1.0;
  double beta = 0.0;
  double operator()(double g) const { return alpha * g + beta; }
};

using kan::EdgeReport;

struct Extraction {
  std::string expression;
  std::array<std::string, 2> ginn_expressions;
  std::vector<EdgeReport> edges;
  nn::Json report() const;
};

/// Two GINNs over the raw inputs feeding a KAN(2 -> 5 -> 1) through
/// per-branch normalizers.
class GinnKanModel : public nn::Model {
 public:
  explicit GinnKanModel(std::size_t features, std::uint64_t seed = 0, kan::KanNet::Options kan_opts = {});

  std::string kind() const override { return "ginn-kan"; }
  std::size_t input_dim() const override { return ginn_[0].features(); }
  std::unique_ptr<nn::Model> clone() const override { return std::make_unique<GinnKanModel>(*this); }
  ad::Var forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> inputs) const override;
  void prepare(std::span<const std::span<const double>> inputs) override;
  bool after_step(const nn::StepContext& ctx) override;
  int max_smooth_order() const override { return static_cast<int>(kan_.degree()) - 1; }
  nn::Json state() const override;
  void load_state(const nn::Json& j) override;

  const ginn::GinnNet& ginn(std::size_t i) const { return ginn_.at(i); }
  ginn::GinnNet& ginn(std::size_t i) { return ginn_.at(i); }
  const kan::KanNet& kan() const noexcept { return kan_; }
  kan::KanNet& kan() noexcept { return kan_; }
  const Normalizer& normalizer(std::size_t i) const { return norm_.at(i); }
  void set_normalizer(std::size_t i, Normalizer n) { norm_.at(i) = n; }

  double eval(std::span<const double> x) const;
  /// Refits the normalizers to the current GINN outputs on `inputs` and
  /// adjusts the first KAN layer so the composite function is kept.
  void refit_normalizers(std::span<const std::span<const double>> inputs);

  Extraction extract(std::span<const std::string> names = {}) const;

 private:
  std::array<std::vector<double>, 2> branch_outputs(std::span<const std::span<const double>> inputs) const;

  std::array<ginn::GinnNet, 2> ginn_;
  kan::KanNet kan_;
  std::array<Normalizer, 2> norm_;
};

std::string extract_equation(const GinnKanModel& model, std::span<const std::string> names = {});

}  // namespace ginnkan::ginnkan_model
