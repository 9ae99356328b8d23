// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "ginnkan/autodiff.hpp"

namespace ginnkan::nn {

using Json = nlohmann::json;
/// Row per sample, column per feature (column-major, so features are contiguous).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training aborted because the loss (or a node) became non-finite.
class TrainingError : public Error {
 public:
  TrainingError(std::size_t step, const std::string& what);
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t adam_steps = 0;  // per tensor, so blocks added mid-run start fresh
};

/// Named parameter tensors plus Adam state. Scalars are addressed by a flat
/// slot: tensors are laid out back to back in insertion order.
class ParameterStore {
 public:
  std::size_t add(std::string name, std::vector<std::size_t> shape, std::vector<double> values);
  std::size_t tensor_count() const noexcept { return tensors_.size(); }
  const Tensor& tensor(std::size_t i) const { return tensors_.at(i); }
  Tensor& tensor(std::size_t i) { return tensors_.at(i); }
  std::size_t index(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t offset(std::size_t tensor_index) const;
  std::size_t size() const;

  std::vector<double> flat() const;
  void set_flat(std::span<const double> values);

  std::uint64_t step_count() const noexcept { return steps_; }
  void set_step_count(std::uint64_t s) noexcept { steps_ = s; }
  void reset_optimizer_state();

  Json to_json() const;
  static ParameterStore from_json(const Json& j);

 private:
  std::vector<Tensor> tensors_;
  std::uint64_t steps_ = 0;
};

/// Graph nodes for every scalar of a store, indexed by flat slot.
class ParamNodes {
 public:
  ParamNodes() = default;
  ParamNodes(ad::Graph& g, const ParameterStore& store);
  ad::Var at(std::size_t tensor_index, std::size_t i = 0) const {
    return nodes_[offsets_[tensor_index] + i];
  }
  std::span<const ad::Var> all() const { return nodes_; }
  std::span<const ad::Var> slice(std::size_t tensor_index, std::size_t begin, std::size_t count) const {
    return std::span<const ad::Var>(nodes_).subspan(offsets_[tensor_index] + begin, count);
  }

 private:
  std::vector<ad::Var> nodes_;
  std::vector<std::size_t> offsets_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update over every tensor. Bias correction uses each tensor's own
/// step count; the store-wide count advances once.
/// Scalars whose gradient is exactly zero are left untouched, moments included.
void adam_step(ParameterStore& store, std::span<const double> grads, double lr,
               const AdamOptions& opts = {});

double mse(std::span<const double> pred, std::span<const double> target);
double r_squared(std::span<const double> pred, std::span<const double> target);

struct TrainConfig {
  double lr = 0.01;
  std::size_t max_steps = 2000;
  std::uint64_t seed = 0;
  std::size_t growth_patience = 200;
  double growth_threshold = 0.01;
  double ic_weight = 1.0;
  double bc_weight = 1.0;
  std::size_t grid_update_interval = 200;

  void validate() const;
  Json to_json() const;
  static TrainConfig from_json(const Json& j);
};

/// What a model sees after every optimizer step.
struct StepContext {
  std::size_t step = 0;  // zero-based index of the step just taken
  std::size_t max_steps = 0;
  std::span<const double> loss_history;
  /// Current model inputs, one span per input feature.
  std::span<const std::span<const double>> inputs;
  const TrainConfig* config = nullptr;
};

class Model {
 public:
  virtual ~Model() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::unique_ptr<Model> clone() const = 0;

  /// Prediction graph for one batch of lanes.
  virtual ad::Var forward(ad::Graph& g, const ParamNodes& params,
                          std::span<const ad::Var> inputs) const = 0;

  /// Fits data-dependent preprocessing (shifts, normalizers) before training.
  virtual void prepare(std::span<const std::span<const double>> inputs) { (void)inputs; }

  /// Growth and grid hooks. True means the graph structure changed.
  virtual bool after_step(const StepContext& ctx) {
    (void)ctx;
    return false;
  }

  /// Largest input-derivative order the model can represent smoothly.
  virtual int max_smooth_order() const { return 1 << 20; }

  virtual Json state() const { return Json::object(); }
  virtual void load_state(const Json& j) { (void)j; }

  ParameterStore& parameters() noexcept { return params_; }
  const ParameterStore& parameters() const noexcept { return params_; }

  /// Value-only predictions, one per row of `inputs`.
  std::vector<double> predict(const Matrix& inputs) const;
  std::vector<double> predict(std::span<const std::span<const double>> columns) const;

 protected:
  ParameterStore params_;
};

/// Evaluates a per-lane loss graph over a chunked dataset and accumulates
/// parameter gradients. The graph is built once and replayed for each chunk
/// until invalidate() is called.
class LossProgram {
 public:
  using Builder = std::function<ad::Var(ad::Graph&, const ParamNodes&, std::span<const ad::Var>)>;

  LossProgram(std::size_t columns, Builder builder, std::size_t max_lanes = 256);

  /// Adds weight * sum over rows of the lane loss to *grad; returns that sum.
  double accumulate(const ParameterStore& store, std::span<const std::span<const double>> data,
                    double weight, std::span<double> grad);
  /// Loss values only (no reverse pass).
  double value(const ParameterStore& store, std::span<const std::span<const double>> data,
               double weight);
  void invalidate() { graph_.reset(); }
  std::size_t node_count() const { return graph_ ? graph_->size() : 0; }

 private:
  double run(const ParameterStore& store, std::span<const std::span<const double>> data,
             double weight, std::span<double> grad, bool backward);

  std::size_t columns_;
  Builder builder_;
  std::size_t max_lanes_;
  std::unique_ptr<ad::Graph> graph_;
  std::vector<ad::Var> inputs_;
  ad::Var loss_;
  std::size_t built_params_ = 0;
  std::vector<std::vector<double>> chunk_;
  std::vector<double> seed_;
};

struct TrainResult {
  std::vector<double> loss_history;
};

/// Full-batch Adam on mean squared error.
TrainResult train_supervised(Model& model, const Matrix& inputs, const Vector& targets,
                             const TrainConfig& config);

/// Spans over the columns of a column-major matrix.
std::vector<std::span<const double>> columns_of(const Matrix& m);

/// Plain-text rendering of a real number with `digits` significant digits.
std::string format_number(double v, int digits = 4);

}  // namespace ginnkan::nn
