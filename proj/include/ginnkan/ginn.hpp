// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ginnkan/autodiff.hpp"
#include "ginnkan/nn.hpp"
#include "ginnkan/symbolic.hpp"

namespace ginnkan::ginn {

inline constexpr std::size_t kMaxBlocks = 4;

struct PTABlock {
  std::vector<double> exponents;
};

/// Plain copy of a GINN's parameters: y = sum_i a_i * prod_j (x_j + shift_j)^w_ij.
struct GinnSnapshot {
  std::vector<PTABlock> blocks;
  std::vector<double> coef;
  std::vector<double> shift;
};

/// exp(sum_j w_j * ln x_j). Throws if some x_j <= 0, naming the feature.
double pta_forward(std::span<const double> w, std::span<const double> x);
ad::Var pta_forward(std::span<const ad::Var> w, std::span<const ad::Var> x);

double ginn_forward(const GinnSnapshot& model, std::span<const double> x);

/// True when the loss improved by less than `threshold` (relative) over the
/// last `patience` steps.
bool growth_controller(std::span<const double> loss_history, std::size_t patience, double threshold);

/// Power-term expression with 4 significant digits; terms with |a_i| < 1e-4
/// are dropped.
sym::LinearForm equation_terms(const GinnSnapshot& model, std::span<const std::string> names);
std::string extract_equation(const GinnSnapshot& model, std::span<const std::string> names = {});

/// Parallel PTA blocks whose parameters live in a ParameterStore under
/// "<prefix>pta<i>.exponents" and "<prefix>pta<i>.coef".
class GinnNet {
 public:
  GinnNet() = default;
  GinnNet(std::size_t features, nn::ParameterStore& store, std::string prefix, std::uint64_t seed);

  std::size_t features() const noexcept { return features_; }
  std::size_t block_count() const noexcept { return blocks_.size(); }
  const std::vector<double>& shift() const noexcept { return shift_; }
  void set_shift(std::vector<double> shift);
  /// Shift of -min + 0.1 on every feature that has a value <= 0.
  void fit_shift(std::span<const std::span<const double>> inputs);
  std::size_t parameter_count(const nn::ParameterStore& store) const;

  ad::Var forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> x) const;
  double eval(const nn::ParameterStore& store, std::span<const double> x) const;
  GinnSnapshot snapshot(const nn::ParameterStore& store) const;

  /// Appends a block with exponents ~ U(0, 1) and coefficient 0. Returns
  /// false (and changes nothing) at the block cap.
  bool grow(nn::ParameterStore& store);
  std::size_t last_growth_step() const noexcept { return last_growth_; }
  /// Growth hook for a training step; true when a block was added.
  bool maybe_grow(nn::ParameterStore& store, const nn::StepContext& ctx);

  nn::Json state() const;
  void load_state(const nn::Json& j, const nn::ParameterStore& store);

 private:
  struct Block {
    std::size_t exponents = 0, coef = 0;
  };
  void check_positive(std::span<const double> x) const;

  std::size_t features_ = 0;
  std::string prefix_;
  std::uint64_t seed_ = 0;
  std::vector<double> shift_;
  std::vector<Block> blocks_;
  std::size_t last_growth_ = 0;
};

class GinnModel : public nn::Model {
 public:
  explicit GinnModel(std::size_t features, std::uint64_t seed = 0);

  std::string kind() const override { return "ginn"; }
  std::size_t input_dim() const override { return net_.features(); }
  std::unique_ptr<nn::Model> clone() const override { return std::make_unique<GinnModel>(*this); }
  ad::Var forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> inputs) const override;
  void prepare(std::span<const std::span<const double>> inputs) override { net_.fit_shift(inputs); }
  bool after_step(const nn::StepContext& ctx) override { return net_.maybe_grow(params_, ctx); }
  nn::Json state() const override { return net_.state(); }
  void load_state(const nn::Json& j) override { net_.load_state(j, params_); }

  const GinnNet& net() const noexcept { return net_; }
  GinnNet& net() noexcept { return net_; }
  bool grow() { return net_.grow(params_); }
  GinnSnapshot snapshot() const { return net_.snapshot(params_); }

 private:
  GinnNet net_;
};

}  // namespace ginnkan::ginn
