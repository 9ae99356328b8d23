// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace ginnkan::nn {

TrainingError::TrainingError(std::size_t step, const std::string& what)
    : Error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

// ---------------------------------------------------------------------------
// ParameterStore

std::size_t ParameterStore::add(std::string name, std::vector<std::size_t> shape,
                                std::vector<double> values) {
  if (contains(name)) throw Error("duplicate parameter tensor '" + name + "'");
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                                        std::multiplies<>());
  if (n != values.size()) throw Error("tensor '" + name + "': shape does not match value count");
  Tensor t;
  t.name = std::move(name);
  t.shape = std::move(shape);
  t.values = std::move(values);
  t.first_moment.assign(n, 0.0);
  t.second_moment.assign(n, 0.0);
  tensors_.push_back(std::move(t));
  return tensors_.size() - 1;
}

std::size_t ParameterStore::index(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  throw Error("unknown parameter tensor '" + std::string(name) + "'");
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const Tensor& t) { return t.name == name; });
}

std::size_t ParameterStore::offset(std::size_t tensor_index) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < tensor_index; ++i) off += tensors_.at(i).values.size();
  return off;
}

std::size_t ParameterStore::size() const { return offset(tensors_.size()); }

std::vector<double> ParameterStore::flat() const {
  std::vector<double> out;
  out.reserve(size());
  for (const Tensor& t : tensors_) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

void ParameterStore::set_flat(std::span<const double> values) {
  if (values.size() != size()) throw Error("set_flat: size mismatch");
  std::size_t k = 0;
  for (Tensor& t : tensors_) {
    for (double& v : t.values) v = values[k++];
  }
}

void ParameterStore::reset_optimizer_state() {
  steps_ = 0;
  for (Tensor& t : tensors_) {
    t.adam_steps = 0;
    std::fill(t.first_moment.begin(), t.first_moment.end(), 0.0);
    std::fill(t.second_moment.begin(), t.second_moment.end(), 0.0);
  }
}

Json ParameterStore::to_json() const {
  Json arr = Json::array();
  for (const Tensor& t : tensors_) {
    arr.push_back({{"name", t.name},
                   {"shape", t.shape},
                   {"values", t.values},
                   {"first_moment", t.first_moment},
                   {"second_moment", t.second_moment},
                   {"adam_steps", t.adam_steps}});
  }
  return {{"tensors", arr}, {"adam_steps", steps_}};
}

ParameterStore ParameterStore::from_json(const Json& j) {
  ParameterStore store;
  for (const Json& t : j.at("tensors")) {
    const std::size_t i = store.add(t.at("name").get<std::string>(),
                                    t.at("shape").get<std::vector<std::size_t>>(),
                                    t.at("values").get<std::vector<double>>());
    Tensor& dst = store.tensor(i);
    if (t.contains("first_moment")) dst.first_moment = t.at("first_moment").get<std::vector<double>>();
    if (t.contains("second_moment")) dst.second_moment = t.at("second_moment").get<std::vector<double>>();
    dst.adam_steps = t.value("adam_steps", j.value("adam_steps", std::uint64_t{0}));
    if (dst.first_moment.size() != dst.values.size() || dst.second_moment.size() != dst.values.size())
      throw Error("tensor '" + dst.name + "': moment shape mismatch");
  }
  store.steps_ = j.value("adam_steps", std::uint64_t{0});
  return store;
}

ParamNodes::ParamNodes(ad::Graph& g, const ParameterStore& store) {
  std::size_t slot = 0;
  for (std::size_t i = 0; i < store.tensor_count(); ++i) {
    offsets_.push_back(slot);
    for (double v : store.tensor(i).values) {
      nodes_.push_back(g.parameter(v, static_cast<std::uint32_t>(slot)));
      ++slot;
    }
  }
}

// ---------------------------------------------------------------------------
// Optimizer and metrics

void adam_step(ParameterStore& store, std::span<const double> grads, double lr,
               const AdamOptions& opts) {
  if (grads.size() != store.size()) throw Error("adam_step: gradient size does not match parameters");
  if (!(lr > 0.0)) throw Error("adam_step: learning rate must be positive");
  store.set_step_count(store.step_count() + 1);
  std::size_t k = 0;
  for (std::size_t ti = 0; ti < store.tensor_count(); ++ti) {
    Tensor& tensor = store.tensor(ti);
    const double t = static_cast<double>(++tensor.adam_steps);
    const double c1 = 1.0 - std::pow(opts.beta1, t);
    const double c2 = 1.0 - std::pow(opts.beta2, t);
    for (std::size_t i = 0; i < tensor.values.size(); ++i, ++k) {
      const double g = grads[k];
      if (g == 0.0) continue;
      double& m = tensor.first_moment[i];
      double& v = tensor.second_moment[i];
      m = opts.beta1 * m + (1.0 - opts.beta1) * g;
      v = opts.beta2 * v + (1.0 - opts.beta2) * g * g;
      tensor.values[i] -= lr * (m / c1) / (std::sqrt(v / c2) + opts.eps);
    }
  }
}

double mse(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw Error("mse: length mismatch");
  if (pred.empty()) throw Error("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double r_squared(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw Error("r_squared: length mismatch");
  if (pred.size() < 2) throw Error("r_squared: needs at least two samples");
  const double mean = std::accumulate(target.begin(), target.end(), 0.0) / static_cast<double>(target.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (pred[i] - target[i]) * (pred[i] - target[i]);
    ss_tot += (target[i] - mean) * (target[i] - mean);
  }
  if (ss_tot == 0.0) throw Error("r_squared: constant target");
  return 1.0 - ss_res / ss_tot;
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error("learning rate must be positive");
  if (!(growth_threshold >= 0.0)) throw Error("growth threshold must be non-negative");
  if (!(ic_weight >= 0.0) || !(bc_weight >= 0.0)) throw Error("loss weights must be non-negative");
  if (grid_update_interval == 0) throw Error("grid update interval must be positive");
}

Json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"max_steps", max_steps},
          {"seed", seed},
          {"growth_patience", growth_patience},
          {"growth_threshold", growth_threshold},
          {"ic_weight", ic_weight},
          {"bc_weight", bc_weight},
          {"grid_update_interval", grid_update_interval}};
}

TrainConfig TrainConfig::from_json(const Json& j) {
  TrainConfig c;
  c.lr = j.value("lr", c.lr);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.seed = j.value("seed", c.seed);
  c.growth_patience = j.value("growth_patience", c.growth_patience);
  c.growth_threshold = j.value("growth_threshold", c.growth_threshold);
  c.ic_weight = j.value("ic_weight", c.ic_weight);
  c.bc_weight = j.value("bc_weight", c.bc_weight);
  c.grid_update_interval = j.value("grid_update_interval", c.grid_update_interval);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// LossProgram

LossProgram::LossProgram(std::size_t columns, Builder builder, std::size_t max_lanes)
    : columns_(columns), builder_(std::move(builder)), max_lanes_(std::max<std::size_t>(1, max_lanes)) {}

double LossProgram::run(const ParameterStore& store, std::span<const std::span<const double>> data,
                        double weight, std::span<double> grad, bool backward) {
  if (data.size() != columns_) throw Error("LossProgram: column count mismatch");
  const std::size_t rows = data.empty() ? 0 : data[0].size();
  for (const auto& col : data) {
    if (col.size() != rows) throw Error("LossProgram: ragged columns");
  }
  if (rows == 0) return 0.0;
  const std::size_t lanes = std::min(rows, max_lanes_);
  if (!graph_ || graph_->lanes() != lanes || built_params_ != store.size()) {
    graph_.reset();
    // Leaf values must be bound at build time so the eager pass stays finite.
    chunk_.assign(columns_, std::vector<double>(lanes));
    for (std::size_t c = 0; c < columns_; ++c) {
      for (std::size_t l = 0; l < lanes; ++l) chunk_[c][l] = data[c][l];
    }
    graph_ = std::make_unique<ad::Graph>(lanes);
    inputs_.clear();
    for (std::size_t c = 0; c < columns_; ++c) inputs_.push_back(graph_->input(chunk_[c]));
    ParamNodes params(*graph_, store);
    loss_ = builder_(*graph_, params, inputs_);
    built_params_ = store.size();
  }
  const std::vector<double> flat = store.flat();
  chunk_.assign(columns_, std::vector<double>(lanes));
  seed_.assign(lanes, weight);
  double total = 0.0;
  for (std::size_t begin = 0; begin < rows; begin += lanes) {
    const std::size_t n = std::min(lanes, rows - begin);
    ad::Bindings b;
    b.parameters = flat;
    for (std::size_t c = 0; c < columns_; ++c) {
      for (std::size_t l = 0; l < lanes; ++l) chunk_[c][l] = data[c][begin + std::min(l, n - 1)];
      b.inputs.emplace_back(inputs_[c], chunk_[c]);
    }
    graph_->evaluate(b);
    for (std::size_t l = 0; l < lanes; ++l) seed_[l] = l < n ? weight : 0.0;
    const auto lv = graph_->values(loss_);
    for (std::size_t l = 0; l < n; ++l) total += weight * lv[l];
    if (backward) {
      graph_->backward(loss_, seed_);
      graph_->accumulate_parameter_gradients(grad);
    }
  }
  return total;
}

double LossProgram::accumulate(const ParameterStore& store,
                               std::span<const std::span<const double>> data, double weight,
                               std::span<double> grad) {
  if (grad.size() != store.size()) throw Error("LossProgram: gradient buffer size mismatch");
  return run(store, data, weight, grad, true);
}

double LossProgram::value(const ParameterStore& store,
                          std::span<const std::span<const double>> data, double weight) {
  return run(store, data, weight, {}, false);
}

// ---------------------------------------------------------------------------
// Model helpers and training

std::vector<std::span<const double>> columns_of(const Matrix& m) {
  std::vector<std::span<const double>> cols;
  cols.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    cols.emplace_back(m.data() + c * m.rows(), static_cast<std::size_t>(m.rows()));
  }
  return cols;
}

std::vector<double> Model::predict(std::span<const std::span<const double>> columns) const {
  if (columns.size() != input_dim()) throw Error("predict: input dimension mismatch");
  const std::size_t rows = columns.empty() ? 0 : columns[0].size();
  std::vector<double> out(rows);
  if (rows == 0) return out;
  const std::size_t lanes = std::min<std::size_t>(rows, 512);
  std::vector<std::vector<double>> chunk(columns.size(), std::vector<double>(lanes));
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (std::size_t l = 0; l < lanes; ++l) chunk[c][l] = columns[c][l];
  }
  ad::Graph g(lanes);
  std::vector<ad::Var> inputs;
  for (std::size_t c = 0; c < columns.size(); ++c) inputs.push_back(g.input(chunk[c]));
  ParamNodes params(g, params_);
  ad::Var y = forward(g, params, inputs);
  for (std::size_t begin = 0; begin < rows; begin += lanes) {
    const std::size_t n = std::min(lanes, rows - begin);
    if (begin > 0) {
      ad::Bindings b;
      for (std::size_t c = 0; c < columns.size(); ++c) {
        for (std::size_t l = 0; l < lanes; ++l) chunk[c][l] = columns[c][begin + std::min(l, n - 1)];
        b.inputs.emplace_back(inputs[c], chunk[c]);
      }
      g.evaluate(b);
    }
    const auto v = g.values(y);
    std::copy_n(v.begin(), n, out.begin() + static_cast<std::ptrdiff_t>(begin));
  }
  return out;
}

std::vector<double> Model::predict(const Matrix& inputs) const {
  const auto cols = columns_of(inputs);
  return predict(std::span<const std::span<const double>>(cols));
}

TrainResult train_supervised(Model& model, const Matrix& inputs, const Vector& targets,
                             const TrainConfig& config) {
  config.validate();
  if (inputs.rows() == 0) throw Error("train_supervised: empty dataset");
  if (inputs.rows() != targets.size()) throw Error("train_supervised: inputs and targets disagree in length");
  if (static_cast<std::size_t>(inputs.cols()) != model.input_dim())
    throw Error("train_supervised: input dimension mismatch");

  TrainResult result;
  if (config.max_steps == 0) return result;

  const auto cols = columns_of(inputs);
  model.prepare(cols);
  std::vector<std::span<const double>> data(cols.begin(), cols.end());
  data.emplace_back(targets.data(), static_cast<std::size_t>(targets.size()));

  const std::size_t dim = model.input_dim();
  LossProgram program(dim + 1, [&model, dim](ad::Graph& g, const ParamNodes& p, std::span<const ad::Var> in) {
    ad::Var pred = model.forward(g, p, in.first(dim));
    ad::Var r = pred - in[dim];
    return r * r;
  });

  const double weight = 1.0 / static_cast<double>(inputs.rows());
  std::vector<double> grad;
  result.loss_history.reserve(config.max_steps);
  for (std::size_t step = 0; step < config.max_steps; ++step) {
    grad.assign(model.parameters().size(), 0.0);
    double loss = 0.0;
    try {
      loss = program.accumulate(model.parameters(), data, weight, grad);
    } catch (const ad::NonFiniteError& e) {
      throw TrainingError(step, e.what());
    }
    if (!std::isfinite(loss)) throw TrainingError(step, "loss is not finite");
    result.loss_history.push_back(loss);
    adam_step(model.parameters(), grad, config.lr);
    StepContext ctx;
    ctx.step = step;
    ctx.max_steps = config.max_steps;
    ctx.loss_history = result.loss_history;
    ctx.inputs = cols;
    ctx.config = &config;
    if (model.after_step(ctx)) program.invalidate();
  }
  return result;
}

std::string format_number(double v, int digits) {
  if (v == 0.0) return "0";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

}  // namespace ginnkan::nn
