// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/ginn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ginnkan::ginn {

using nn::Error;

namespace {

[[noreturn]] void nonpositive(std::size_t feature, double value) {
  throw Error("GINN input feature x" + std::to_string(feature + 1) + " is not positive after shift (" +
              std::to_string(value) + ")");
}

ad::Var pta_from_logs(std::span<const ad::Var> w, std::span<const ad::Var> logs) {
  std::vector<ad::Var> terms;
  terms.reserve(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) terms.push_back(w[j] * logs[j]);
  return ad::exp(ad::sum(terms));
}

}  // namespace

double pta_forward(std::span<const double> w, std::span<const double> x) {
  if (w.size() != x.size()) throw Error("pta_forward: exponent and input sizes differ");
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!(x[j] > 0.0)) nonpositive(j, x[j]);
    acc += w[j] * std::log(x[j]);
  }
  return std::exp(acc);
}

ad::Var pta_forward(std::span<const ad::Var> w, std::span<const ad::Var> x) {
  if (w.size() != x.size()) throw Error("pta_forward: exponent and input sizes differ");
  std::vector<ad::Var> logs;
  for (std::size_t j = 0; j < x.size(); ++j) {
    ad::Graph* g = x[j].graph();
    if (g->bound(x[j])) {
      for (double v : g->values(x[j])) {
        if (!(v > 0.0)) nonpositive(j, v);
      }
    }
    logs.push_back(ad::log(x[j]));
  }
  return pta_from_logs(w, logs);
}

double ginn_forward(const GinnSnapshot& model, std::span<const double> x) {
  if (x.size() != model.shift.size()) throw Error("ginn_forward: input size does not match shift");
  if (model.coef.size() != model.blocks.size()) throw Error("ginn_forward: one coefficient per block");
  std::vector<double> shifted(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) shifted[j] = x[j] + model.shift[j];
  double y = 0.0;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    y += model.coef[i] * pta_forward(model.blocks[i].exponents, shifted);
  }
  return y;
}

bool growth_controller(std::span<const double> loss_history, std::size_t patience, double threshold) {
  const std::size_t n = loss_history.size();
  if (n == 0 || patience == 0 || n <= patience) return false;
  const double before = loss_history[n - 1 - patience];
  const double now = loss_history[n - 1];
  if (!(before > 0.0)) return false;
  return (before - now) / before < threshold;
}

sym::LinearForm equation_terms(const GinnSnapshot& model, std::span<const std::string> names) {
  std::vector<std::string> fallback;
  if (names.empty()) {
    fallback = sym::default_names(model.shift.size());
    names = fallback;
  }
  if (names.size() != model.shift.size()) throw Error("extract_equation: one name per feature");
  sym::LinearForm out;
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const double a = model.coef[i];
    if (std::abs(a) < 1e-4) continue;
    std::string body;
    for (std::size_t j = 0; j < names.size(); ++j) {
      const double w = model.blocks[i].exponents[j];
      if (std::abs(w) < 1e-4) continue;
      std::string base = names[j];
      if (std::abs(model.shift[j]) > 0.0) base = "(" + names[j] + " + " + nn::format_number(model.shift[j]) + ")";
      const std::string e = nn::format_number(w);
      std::string factor = base;
      if (e != "1") factor += "^" + (w < 0 ? "(" + e + ")" : e);
      body += (body.empty() ? "" : "*") + factor;
    }
    if (body.empty()) out += sym::LinearForm(a);
    else out += sym::LinearForm::atom(body, a);
  }
  return out;
}

std::string extract_equation(const GinnSnapshot& model, std::span<const std::string> names) {
  return equation_terms(model, names).render();
}

// ---------------------------------------------------------------------------
// GinnNet

GinnNet::GinnNet(std::size_t features, nn::ParameterStore& store, std::string prefix, std::uint64_t seed)
    : features_(features), prefix_(std::move(prefix)), seed_(seed), shift_(features, 0.0) {
  if (features == 0) throw Error("GINN needs at least one input feature");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> exp_dist(0.0, 1.0), coef_dist(-1.0, 1.0);
  std::vector<double> w(features);
  for (double& v : w) v = exp_dist(rng);
  Block b;
  b.exponents = store.add(prefix_ + "pta0.exponents", {features}, std::move(w));
  b.coef = store.add(prefix_ + "pta0.coef", {1}, {coef_dist(rng)});
  blocks_.push_back(b);
}

void GinnNet::set_shift(std::vector<double> shift) {
  if (shift.size() != features_) throw Error("GINN shift size mismatch");
  for (double s : shift) {
    if (!(s >= 0.0)) throw Error("GINN shift must be non-negative");
  }
  shift_ = std::move(shift);
}

void GinnNet::fit_shift(std::span<const std::span<const double>> inputs) {
  if (inputs.size() != features_) throw Error("GINN input dimension mismatch");
  for (std::size_t j = 0; j < features_; ++j) {
    if (inputs[j].empty()) continue;
    const double mn = *std::min_element(inputs[j].begin(), inputs[j].end());
    shift_[j] = mn <= 0.0 ? -mn + 0.1 : 0.0;
  }
}

std::size_t GinnNet::parameter_count(const nn::ParameterStore& store) const {
  std::size_t n = 0;
  for (const Block& b : blocks_) n += store.tensor(b.exponents).values.size() + store.tensor(b.coef).values.size();
  return n;
}

void GinnNet::check_positive(std::span<const double> x) const {
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!(x[j] + shift_[j] > 0.0)) nonpositive(j, x[j] + shift_[j]);
  }
}

ad::Var GinnNet::forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> x) const {
  if (x.size() != features_) throw Error("GINN input dimension mismatch");
  std::vector<ad::Var> logs;
  for (std::size_t j = 0; j < features_; ++j) {
    ad::Var s = shift_[j] != 0.0 ? x[j] + shift_[j] : x[j];
    if (g.bound(s)) {
      for (double v : g.values(s)) {
        if (!(v > 0.0)) nonpositive(j, v);
      }
    }
    logs.push_back(ad::log(s));
  }
  std::vector<ad::Var> terms;
  for (const Block& b : blocks_) {
    terms.push_back(params.at(b.coef) * pta_from_logs(params.slice(b.exponents, 0, features_), logs));
  }
  return ad::sum(terms);
}

double GinnNet::eval(const nn::ParameterStore& store, std::span<const double> x) const {
  if (x.size() != features_) throw Error("GINN input dimension mismatch");
  check_positive(x);
  double y = 0.0;
  for (const Block& b : blocks_) {
    const auto& w = store.tensor(b.exponents).values;
    double acc = 0.0;
    for (std::size_t j = 0; j < features_; ++j) acc += w[j] * std::log(x[j] + shift_[j]);
    y += store.tensor(b.coef).values[0] * std::exp(acc);
  }
  return y;
}

GinnSnapshot GinnNet::snapshot(const nn::ParameterStore& store) const {
  GinnSnapshot s;
  s.shift = shift_;
  for (const Block& b : blocks_) {
    s.blocks.push_back({store.tensor(b.exponents).values});
    s.coef.push_back(store.tensor(b.coef).values[0]);
  }
  return s;
}

bool GinnNet::grow(nn::ParameterStore& store) {
  if (blocks_.size() >= kMaxBlocks) return false;
  const std::size_t i = blocks_.size();
  std::mt19937_64 rng(seed_ + 0x9E3779B97F4A7C15ull * i);
  std::uniform_real_distribution<double> exp_dist(0.0, 1.0);
  std::vector<double> w(features_);
  for (double& v : w) v = exp_dist(rng);
  const std::string p = prefix_ + "pta" + std::to_string(i);
  Block b;
  b.exponents = store.add(p + ".exponents", {features_}, std::move(w));
  b.coef = store.add(p + ".coef", {1}, {0.0});
  blocks_.push_back(b);
  return true;
}

bool GinnNet::maybe_grow(nn::ParameterStore& store, const nn::StepContext& ctx) {
  if (blocks_.size() >= kMaxBlocks || !ctx.config) return false;
  const std::size_t done = ctx.step + 1;
  const std::size_t patience = ctx.config->growth_patience;
  if (done >= ctx.max_steps || done < last_growth_ + patience) return false;
  if (!growth_controller(ctx.loss_history, patience, ctx.config->growth_threshold)) return false;
  grow(store);
  last_growth_ = done;
  return true;
}

nn::Json GinnNet::state() const {
  return {{"features", features_}, {"prefix", prefix_},     {"seed", seed_},
          {"shift", shift_},       {"blocks", blocks_.size()}, {"last_growth", last_growth_}};
}

void GinnNet::load_state(const nn::Json& j, const nn::ParameterStore& store) {
  features_ = j.at("features").get<std::size_t>();
  prefix_ = j.at("prefix").get<std::string>();
  seed_ = j.at("seed").get<std::uint64_t>();
  shift_ = j.at("shift").get<std::vector<double>>();
  last_growth_ = j.value("last_growth", std::size_t{0});
  const auto n = j.at("blocks").get<std::size_t>();
  if (n == 0 || n > kMaxBlocks) throw Error("GINN state has an invalid block count");
  blocks_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string p = prefix_ + "pta" + std::to_string(i);
    blocks_.push_back({store.index(p + ".exponents"), store.index(p + ".coef")});
  }
}

// ---------------------------------------------------------------------------

GinnModel::GinnModel(std::size_t features, std::uint64_t seed) : net_(features, params_, "", seed) {}

ad::Var GinnModel::forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> inputs) const {
  return net_.forward(g, params, inputs);
}

}  // namespace ginnkan::ginn
