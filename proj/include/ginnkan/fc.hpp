// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "ginnkan/nn.hpp"

namespace ginnkan::fc {

/// Fully connected tanh network with a linear output. Parameters are
/// "layer<l>.weight" [out, in] (row-major) and "layer<l>.bias" [out].
class FcModel : public nn::Model {
 public:
  FcModel(std::size_t input_dim, std::vector<std::size_t> hidden = {32, 32, 32, 32, 32}, std::uint64_t seed = 0);

  std::string kind() const override { return "fc"; }
  std::size_t input_dim() const override { return widths_.front(); }
  std::unique_ptr<nn::Model> clone() const override { return std::make_unique<FcModel>(*this); }
  ad::Var forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> inputs) const override;
  nn::Json state() const override { return {{"widths", widths_}}; }
  void load_state(const nn::Json& j) override;

  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t layer_count() const noexcept { return widths_.size() - 1; }

 private:
  std::vector<std::size_t> widths_;
};

/// Output of a 2-input FcModel and its input derivatives over a batch,
/// propagated forward through the layers as value/first/second-order jets.
/// Input 0 is x and input 1 is t.
struct Jet {
  nn::Vector u, ux, ut, uxx, utt;
};

class JetEvaluator {
 public:
  /// order_x, order_t in 0..2 select which derivatives are carried.
  JetEvaluator(const FcModel& model, int order_x, int order_t);

  const Jet& forward(const nn::ParameterStore& store, const nn::Vector& x, const nn::Vector& t);
  /// Adds the parameter gradient for the given adjoints of the last forward
  /// outputs (unused derivative adjoints are ignored).
  void backward(const nn::ParameterStore& store, const Jet& adjoint, std::span<double> grad) const;

 private:
  // Per layer, rows are stacked in blocks of n samples: value, then the
  // carried derivatives in the order x, t, xx, tt.
  struct Layer {
    nn::Matrix a;           // post-activation
    nn::Matrix z;           // pre-activation
    nn::Matrix s1, s2, s3;  // tanh derivatives at the value block
  };
  int block(char which) const;
  void weights(const nn::ParameterStore& store, std::size_t l, nn::Matrix& w, nn::Vector& b) const;

  const FcModel* model_;
  int ox_, ot_;
  int blocks_ = 1;
  Eigen::Index n_ = 0;
  std::vector<Layer> cache_;
  Jet out_;
};

}  // namespace ginnkan::fc
