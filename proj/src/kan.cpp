// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/kan.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Dense>

namespace ginnkan::kan {

namespace {

using nn::Error;

constexpr double kInf = std::numeric_limits<double>::infinity();

std::size_t nearest_rank(std::size_t n, double percent) {
  const auto r = static_cast<std::size_t>(std::ceil(percent / 100.0 * static_cast<double>(n)));
  return std::clamp<std::size_t>(r, 1, n) - 1;
}

nn::Json grid_to_json(const SplineGrid& g) {
  return {{"lo", g.lo}, {"h", g.h}, {"intervals", g.intervals}, {"degree", g.degree}};
}

SplineGrid grid_from_json(const nn::Json& j) {
  SplineGrid g;
  g.lo = j.at("lo").get<double>();
  g.h = j.at("h").get<double>();
  g.intervals = j.at("intervals").get<std::uint32_t>();
  g.degree = j.at("degree").get<std::uint32_t>();
  return g;
}

}  // namespace

SplineGrid make_grid(double lo, double hi, std::uint32_t intervals, std::uint32_t degree) {
  if (!(hi > lo)) throw Error("spline grid needs hi > lo");
  if (intervals == 0) throw Error("spline grid needs at least one interval");
  SplineGrid g;
  g.lo = lo;
  g.h = (hi - lo) / intervals;
  g.intervals = intervals;
  g.degree = degree;
  return g;
}

std::vector<double> knots(const SplineGrid& grid) {
  std::vector<double> out;
  const std::int64_t n = grid.intervals + 2 * grid.degree + 1;
  for (std::int64_t i = 0; i < n; ++i) out.push_back(grid.knot(i));
  return out;
}

std::vector<double> bspline_basis(double x, const SplineGrid& grid) {
  std::vector<double> out(grid.basis_count(), 0.0);
  std::array<double, 16> local{};
  if (grid.degree + 1 > local.size()) throw Error("spline degree too large");
  const std::uint32_t piece = grid.piece(x);
  ad::local_basis(grid, piece, grid.degree, x, local.data());
  const std::uint32_t first = piece - grid.degree;
  for (std::uint32_t s = 0; s <= grid.degree; ++s) out[first + s] = local[s];
  return out;
}

double spline_value(const SplineGrid& grid, std::span<const double> coef, double x) {
  std::array<double, 16> local{};
  const std::uint32_t piece = grid.piece(x);
  ad::local_basis(grid, piece, grid.degree, x, local.data());
  const std::uint32_t first = piece - grid.degree;
  double acc = 0.0;
  for (std::uint32_t s = 0; s <= grid.degree; ++s) acc += coef[first + s] * local[s];
  return acc;
}

std::vector<double> fit_coefficients(const SplineGrid& grid, std::span<const double> xs,
                                     std::span<const double> ys, double ridge) {
  if (xs.size() != ys.size()) throw Error("fit_coefficients: length mismatch");
  const auto nb = static_cast<Eigen::Index>(grid.basis_count());
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(nb, nb);
  Eigen::VectorXd aty = Eigen::VectorXd::Zero(nb);
  for (std::size_t n = 0; n < xs.size(); ++n) {
    const auto row = bspline_basis(xs[n], grid);
    for (Eigen::Index a = 0; a < nb; ++a) {
      if (row[a] == 0.0) continue;
      aty(a) += row[a] * ys[n];
      for (Eigen::Index b = 0; b < nb; ++b) ata(a, b) += row[a] * row[b];
    }
  }
  ata.diagonal().array() += ridge * std::max(1.0, ata.diagonal().mean());
  const Eigen::VectorXd c = ata.ldlt().solve(aty);
  return {c.data(), c.data() + nb};
}

SplineActivation SplineActivation::zero(const SplineGrid& grid) {
  SplineActivation a;
  a.grid = grid;
  a.coef.assign(grid.basis_count(), 0.0);
  a.w_base = 0.0;
  a.w_spline = 1.0;
  return a;
}

void SplineActivation::validate() const {
  if (coef.size() != grid.basis_count()) throw Error("spline activation needs G + k coefficients");
  if (!(grid.h > 0.0)) throw Error("spline activation has an empty grid");
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double activation_forward(const SplineActivation& act, double x) {
  return act.w_base * silu(x) + act.w_spline * spline_value(act.grid, act.coef, x);
}

ad::Var activation_forward(ad::Graph& g, const SplineGrid& grid, ad::Var x, ad::Var silu_x,
                           std::span<const ad::Var> coef, ad::Var w_base, ad::Var w_spline) {
  ad::Var s = g.make_spline(x, coef, grid, grid.degree, 0);
  return w_base * silu_x + w_spline * s;
}

SplineActivation update_grid(const SplineActivation& act, std::span<const double> samples) {
  act.validate();
  if (samples.size() < 2) return act;
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double lo = s[nearest_rank(s.size(), 1.0)];
  const double hi = s[nearest_rank(s.size(), 99.0)];
  const double scale = std::max({1.0, std::abs(lo), std::abs(hi)});
  if (!(hi - lo > 1e-12 * scale)) return act;

  SplineActivation out = act;
  out.grid = make_grid(lo, hi, act.grid.intervals, act.grid.degree);
  constexpr std::size_t kFit = 201;
  std::vector<double> xs(kFit), ys(kFit);
  for (std::size_t n = 0; n < kFit; ++n) {
    xs[n] = lo + (hi - lo) * static_cast<double>(n) / (kFit - 1);
    ys[n] = spline_value(act.grid, act.coef, xs[n]);
  }
  out.coef = fit_coefficients(out.grid, xs, ys);
  return out;
}

double kan_forward(std::span<const KanLayer> layers, std::span<const double> x) {
  if (layers.empty()) throw Error("kan_forward: no layers");
  std::vector<double> cur(x.begin(), x.end());
  for (const KanLayer& layer : layers) {
    if (cur.size() != layer.in_dim) throw Error("kan_forward: dimension mismatch");
    std::vector<double> next(layer.out_dim, 0.0);
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      for (std::size_t j = 0; j < layer.out_dim; ++j) next[j] += activation_forward(layer.at(i, j), cur[i]);
    }
    cur = std::move(next);
  }
  if (cur.size() != 1) throw Error("kan_forward: last layer must have one output");
  return cur[0];
}

ad::Var kan_forward(ad::Graph& g, std::span<const KanLayer> layers, std::span<const ad::Var> x) {
  if (layers.empty()) throw Error("kan_forward: no layers");
  std::vector<ad::Var> cur(x.begin(), x.end());
  for (const KanLayer& layer : layers) {
    if (cur.size() != layer.in_dim) throw Error("kan_forward: dimension mismatch");
    std::vector<std::vector<ad::Var>> terms(layer.out_dim);
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      ad::Var s = ad::silu(cur[i]);
      for (std::size_t j = 0; j < layer.out_dim; ++j) {
        const SplineActivation& act = layer.at(i, j);
        act.validate();
        std::vector<ad::Var> coef;
        for (double c : act.coef) coef.push_back(g.constant(c));
        terms[j].push_back(activation_forward(g, act.grid, cur[i], s, coef, g.constant(act.w_base),
                                              g.constant(act.w_spline)));
      }
    }
    cur.clear();
    for (auto& t : terms) cur.push_back(ad::sum(t));
  }
  if (cur.size() != 1) throw Error("kan_forward: last layer must have one output");
  return cur[0];
}

// ---------------------------------------------------------------------------
// KanNet

KanNet::KanNet(const Options& opts, nn::ParameterStore& store, const std::string& prefix,
               std::mt19937_64& rng)
    : widths_(opts.widths), degree_(opts.degree) {
  if (widths_.size() < 2) throw Error("KAN needs at least one layer");
  if (std::find(widths_.begin(), widths_.end(), 0u) != widths_.end()) throw Error("KAN layer width 0");
  if (widths_.back() != 1) throw Error("KAN output width must be 1");
  const SplineGrid g = make_grid(opts.lo, opts.hi, opts.intervals, opts.degree);
  const std::size_t nb = g.basis_count();
  std::normal_distribution<double> coef_dist(0.0, 0.1);
  std::uniform_real_distribution<double> base_dist(-1.0, 1.0);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    grids_.emplace_back(in, g);
    std::vector<double> coef(in * out * nb), wb(in * out), ws(in * out, 1.0);
    for (double& c : coef) c = coef_dist(rng);
    for (double& w : wb) w = base_dist(rng);
    const std::string p = prefix + "layer" + std::to_string(l);
    LayerTensors t;
    t.coef = store.add(p + ".coef", {in, out, nb}, std::move(coef));
    t.w_base = store.add(p + ".w_base", {in, out}, std::move(wb));
    t.w_spline = store.add(p + ".w_spline", {in, out}, std::move(ws));
    tensors_.push_back(t);
  }
}

std::size_t KanNet::parameter_count(const nn::ParameterStore& store) const {
  std::size_t n = 0;
  for (const LayerTensors& t : tensors_) {
    n += store.tensor(t.coef).values.size() + store.tensor(t.w_base).values.size() +
         store.tensor(t.w_spline).values.size();
  }
  return n;
}

ad::Var KanNet::forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> u) const {
  if (u.size() != input_dim()) throw Error("KAN input dimension mismatch");
  std::vector<ad::Var> cur(u.begin(), u.end());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    const LayerTensors& t = tensors_[l];
    std::vector<std::vector<ad::Var>> terms(out);
    for (std::size_t i = 0; i < in; ++i) {
      const SplineGrid& grid = grids_[l][i];
      const std::size_t nb = grid.basis_count();
      ad::Var s = ad::silu(cur[i]);
      for (std::size_t j = 0; j < out; ++j) {
        const std::size_t e = i * out + j;
        terms[j].push_back(activation_forward(g, grid, cur[i], s, params.slice(t.coef, e * nb, nb),
                                              params.at(t.w_base, e), params.at(t.w_spline, e)));
      }
    }
    cur.clear();
    for (auto& ts : terms) cur.push_back(ad::sum(ts));
  }
  return cur[0];
}

double KanNet::eval(const nn::ParameterStore& store, std::span<const double> u) const {
  std::vector<double> cur(u.begin(), u.end());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    const LayerTensors& t = tensors_[l];
    const auto& coef = store.tensor(t.coef).values;
    const auto& wb = store.tensor(t.w_base).values;
    const auto& ws = store.tensor(t.w_spline).values;
    std::vector<double> next(out, 0.0);
    for (std::size_t i = 0; i < in; ++i) {
      const SplineGrid& grid = grids_[l][i];
      const std::size_t nb = grid.basis_count();
      const double s = silu(cur[i]);
      for (std::size_t j = 0; j < out; ++j) {
        const std::size_t e = i * out + j;
        next[j] += wb[e] * s + ws[e] * spline_value(grid, std::span(coef).subspan(e * nb, nb), cur[i]);
      }
    }
    cur = std::move(next);
  }
  return cur[0];
}

std::vector<std::vector<std::vector<double>>> KanNet::layer_inputs(
    const nn::ParameterStore& store, std::span<const std::span<const double>> u) const {
  if (u.size() != input_dim()) throw Error("KAN input dimension mismatch");
  const std::size_t rows = u.empty() ? 0 : u[0].size();
  std::vector<std::vector<std::vector<double>>> out(layer_count());
  for (std::size_t l = 0; l < layer_count(); ++l) {
    out[l].assign(widths_[l], std::vector<double>(rows));
  }
  for (std::size_t i = 0; i < input_dim(); ++i) std::copy(u[i].begin(), u[i].end(), out[0][i].begin());
  for (std::size_t l = 0; l + 1 < layer_count(); ++l) {
    const std::size_t in = widths_[l], next_dim = widths_[l + 1];
    const LayerTensors& t = tensors_[l];
    const auto& coef = store.tensor(t.coef).values;
    const auto& wb = store.tensor(t.w_base).values;
    const auto& ws = store.tensor(t.w_spline).values;
    for (std::size_t n = 0; n < rows; ++n) {
      for (std::size_t j = 0; j < next_dim; ++j) out[l + 1][j][n] = 0.0;
      for (std::size_t i = 0; i < in; ++i) {
        const SplineGrid& grid = grids_[l][i];
        const std::size_t nb = grid.basis_count();
        const double x = out[l][i][n];
        const double s = silu(x);
        for (std::size_t j = 0; j < next_dim; ++j) {
          const std::size_t e = i * next_dim + j;
          out[l + 1][j][n] += wb[e] * s + ws[e] * spline_value(grid, std::span(coef).subspan(e * nb, nb), x);
        }
      }
    }
  }
  return out;
}

void KanNet::update_grids(nn::ParameterStore& store, std::span<const std::span<const double>> u,
                          std::size_t from_layer) {
  const auto inputs = layer_inputs(store, u);
  for (std::size_t l = from_layer; l < layer_count(); ++l) {
    for (std::size_t i = 0; i < widths_[l]; ++i) {
      std::vector<SplineActivation> updated;
      for (std::size_t j = 0; j < widths_[l + 1]; ++j) updated.push_back(update_grid(edge(store, l, i, j), inputs[l][i]));
      for (std::size_t j = 0; j < widths_[l + 1]; ++j) set_edge(store, l, i, j, updated[j]);
      grids_[l][i] = updated.front().grid;
    }
  }
}

SplineActivation KanNet::edge(const nn::ParameterStore& store, std::size_t l, std::size_t i,
                              std::size_t j) const {
  const LayerTensors& t = tensors_.at(l);
  const std::size_t e = i * widths_[l + 1] + j;
  SplineActivation a;
  a.grid = grids_[l][i];
  const std::size_t nb = a.grid.basis_count();
  const auto& coef = store.tensor(t.coef).values;
  a.coef.assign(coef.begin() + static_cast<std::ptrdiff_t>(e * nb),
                coef.begin() + static_cast<std::ptrdiff_t>((e + 1) * nb));
  a.w_base = store.tensor(t.w_base).values[e];
  a.w_spline = store.tensor(t.w_spline).values[e];
  return a;
}

void KanNet::set_edge(nn::ParameterStore& store, std::size_t l, std::size_t i, std::size_t j,
                      const SplineActivation& act) {
  act.validate();
  const LayerTensors& t = tensors_.at(l);
  const std::size_t e = i * widths_[l + 1] + j;
  const std::size_t nb = grids_[l][i].basis_count();
  if (act.coef.size() != nb) throw Error("set_edge: grid size changed");
  auto& coef = store.tensor(t.coef).values;
  std::copy(act.coef.begin(), act.coef.end(), coef.begin() + static_cast<std::ptrdiff_t>(e * nb));
  store.tensor(t.w_base).values[e] = act.w_base;
  store.tensor(t.w_spline).values[e] = act.w_spline;
}

std::vector<KanLayer> KanNet::layers(const nn::ParameterStore& store) const {
  std::vector<KanLayer> out;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    KanLayer layer;
    layer.in_dim = widths_[l];
    layer.out_dim = widths_[l + 1];
    for (std::size_t i = 0; i < layer.in_dim; ++i) {
      for (std::size_t j = 0; j < layer.out_dim; ++j) layer.acts.push_back(edge(store, l, i, j));
    }
    out.push_back(std::move(layer));
  }
  return out;
}

nn::Json KanNet::state() const {
  nn::Json grids = nn::Json::array();
  for (const auto& layer : grids_) {
    nn::Json row = nn::Json::array();
    for (const SplineGrid& g : layer) row.push_back(grid_to_json(g));
    grids.push_back(row);
  }
  return {{"widths", widths_}, {"degree", degree_}, {"grids", grids}};
}

void KanNet::load_state(const nn::Json& j, const nn::ParameterStore& store, const std::string& prefix) {
  widths_ = j.at("widths").get<std::vector<std::size_t>>();
  degree_ = j.at("degree").get<std::uint32_t>();
  grids_.clear();
  for (const auto& row : j.at("grids")) {
    std::vector<SplineGrid> layer;
    for (const auto& g : row) layer.push_back(grid_from_json(g));
    grids_.push_back(std::move(layer));
  }
  tensors_.clear();
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::string p = prefix + "layer" + std::to_string(l);
    tensors_.push_back({store.index(p + ".coef"), store.index(p + ".w_base"), store.index(p + ".w_spline")});
  }
}

// ---------------------------------------------------------------------------
// KanModel

KanModel::KanModel(std::size_t input_dim, std::uint64_t seed, KanNet::Options opts) {
  opts.widths.front() = input_dim;
  std::mt19937_64 rng(seed);
  net_ = KanNet(opts, params_, "", rng);
  scale_.assign(input_dim, 1.0);
  offset_.assign(input_dim, 0.0);
}

void KanModel::prepare(std::span<const std::span<const double>> inputs) {
  if (inputs.size() != input_dim()) throw Error("KAN input dimension mismatch");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const SplineGrid& g = net_.grid(0, i);
    const auto [mn, mx] = std::minmax_element(inputs[i].begin(), inputs[i].end());
    if (mn == inputs[i].end()) continue;
    if (*mx > *mn) {
      scale_[i] = (g.hi() - g.lo) / (*mx - *mn);
      offset_[i] = g.lo - *mn * scale_[i];
    } else {
      scale_[i] = 1.0;
      offset_[i] = 0.5 * (g.lo + g.hi()) - *mn;
    }
  }
}

ad::Var KanModel::forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> inputs) const {
  if (inputs.size() != input_dim()) throw Error("KAN input dimension mismatch");
  std::vector<ad::Var> u;
  for (std::size_t i = 0; i < inputs.size(); ++i) u.push_back(inputs[i] * scale_[i] + offset_[i]);
  return net_.forward(g, params, u);
}

bool KanModel::after_step(const nn::StepContext& ctx) {
  const std::size_t interval = ctx.config ? ctx.config->grid_update_interval : 200;
  const std::size_t done = ctx.step + 1;
  if (done % interval != 0 || done >= ctx.max_steps || ctx.inputs.empty()) return false;
  std::vector<std::vector<double>> u(input_dim());
  std::vector<std::span<const double>> spans;
  for (std::size_t i = 0; i < input_dim(); ++i) {
    u[i].resize(ctx.inputs[i].size());
    for (std::size_t n = 0; n < u[i].size(); ++n) u[i][n] = ctx.inputs[i][n] * scale_[i] + offset_[i];
    spans.emplace_back(u[i]);
  }
  net_.update_grids(params_, spans);
  return true;
}

nn::Json KanModel::state() const {
  return {{"net", net_.state()}, {"scale", scale_}, {"offset", offset_}};
}

void KanModel::load_state(const nn::Json& j) {
  net_.load_state(j.at("net"), params_, "");
  scale_ = j.at("scale").get<std::vector<double>>();
  offset_ = j.at("offset").get<std::vector<double>>();
}

// ---------------------------------------------------------------------------
// Symbolic snapping

namespace {

bool always(double) { return true; }
bool positive(double u) { return u > 0.0; }
bool nonnegative(double u) { return u >= 0.0; }
bool away_from_zero(double u) { return std::abs(u) > 1e-6; }

double f_x(double u) { return u; }
double f_x2(double u) { return u * u; }
double f_x3(double u) { return u * u * u; }
double f_inv(double u) { return 1.0 / u; }
double f_sqrt(double u) { return std::sqrt(u); }
double f_sin(double u) { return std::sin(u); }
double f_cos(double u) { return std::cos(u); }
double f_tanh(double u) { return std::tanh(u); }
double f_exp(double u) { return std::exp(u); }
double f_ln(double u) { return std::log(u); }
double f_abs(double u) { return std::abs(u); }
double f_one(double) { return 1.0; }

struct Fit {
  double r2 = -kInf;
  double a = 1, b = 0, c = 0, d = 0;
};

class Scorer {
 public:
  Scorer(std::span<const double> xs, std::span<const double> ys) : xs_(xs), ys_(ys), f_(xs.size()) {
    const double n = static_cast<double>(ys.size());
    mean_y_ = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    for (double y : ys) syy_ += (y - mean_y_) * (y - mean_y_);
  }

  double syy() const { return syy_; }
  double mean_y() const { return mean_y_; }

  Fit fit(const SymbolicEntry& e, double a, double b) {
    Fit out;
    out.a = a;
    out.b = b;
    const std::size_t n = xs_.size();
    // A single pole between probes makes the fit meaningless even if no
    // probe lands on it.
    bool has_neg = false, has_pos = false;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = a * xs_[i] + b;
      if (!e.defined(u)) return out;
      has_neg |= u < 0;
      has_pos |= u > 0;
      f_[i] = e.f(u);
      if (!std::isfinite(f_[i])) return out;
    }
    if (e.f == f_inv && has_neg && has_pos) return out;
    const double mean_f = std::accumulate(f_.begin(), f_.end(), 0.0) / static_cast<double>(n);
    double sff = 0, sfy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sff += (f_[i] - mean_f) * (f_[i] - mean_f);
      sfy += (f_[i] - mean_f) * (ys_[i] - mean_y_);
    }
    if (!(sff > 1e-24 * static_cast<double>(n) * std::max(1.0, mean_f * mean_f))) return out;
    out.c = sfy / sff;
    out.d = mean_y_ - out.c * mean_f;
    out.r2 = sfy * sfy / (sff * syy_);
    return out;
  }

 private:
  std::span<const double> xs_, ys_;
  std::vector<double> f_;
  double mean_y_ = 0, syy_ = 0;
};

constexpr double kAMin = 0.2, kAMax = 5.0;

// Nelder-Mead over (log|a|, b) with the sign of a fixed.
Fit refine(Scorer& scorer, const SymbolicEntry& e, Fit start, double b_radius) {
  const double sign = start.a < 0 ? -1.0 : 1.0;
  const double la_lo = std::log(kAMin), la_hi = std::log(kAMax);
  auto eval = [&](std::array<double, 2> p) -> std::pair<double, Fit> {
    p[0] = std::clamp(p[0], la_lo, la_hi);
    p[1] = std::clamp(p[1], -b_radius, b_radius);
    Fit f = scorer.fit(e, sign * std::exp(p[0]), p[1]);
    return {std::isfinite(f.r2) ? 1.0 - f.r2 : kInf, f};
  };
  std::array<std::array<double, 2>, 3> pts{};
  pts[0] = {std::log(std::abs(start.a)), start.b};
  pts[1] = {pts[0][0] + (la_hi - la_lo) / 40.0, pts[0][1]};
  pts[2] = {pts[0][0], pts[0][1] + b_radius / 20.0};
  std::array<double, 3> val{};
  Fit best = start;
  double best_val = std::isfinite(start.r2) ? 1.0 - start.r2 : kInf;
  auto consider = [&](const std::pair<double, Fit>& r) {
    if (r.first < best_val) {
      best_val = r.first;
      best = r.second;
    }
    return r.first;
  };
  for (int i = 0; i < 3; ++i) val[i] = consider(eval(pts[i]));
  for (int iter = 0; iter < 200; ++iter) {
    std::array<int, 3> idx{0, 1, 2};
    std::sort(idx.begin(), idx.end(), [&](int x, int y) { return val[x] < val[y]; });
    const int lo = idx[0], mid = idx[1], hi = idx[2];
    const double size = std::abs(pts[hi][0] - pts[lo][0]) + std::abs(pts[hi][1] - pts[lo][1]) +
                        std::abs(pts[mid][0] - pts[lo][0]) + std::abs(pts[mid][1] - pts[lo][1]);
    if (size < 1e-10) break;
    const std::array<double, 2> cen{0.5 * (pts[lo][0] + pts[mid][0]), 0.5 * (pts[lo][1] + pts[mid][1])};
    auto along = [&](double t) {
      return std::array<double, 2>{cen[0] + t * (pts[hi][0] - cen[0]), cen[1] + t * (pts[hi][1] - cen[1])};
    };
    const auto xr = along(-1.0);
    const double fr = consider(eval(xr));
    if (fr < val[lo]) {
      const auto xe = along(-2.0);
      const double fe = consider(eval(xe));
      if (fe < fr) {
        pts[hi] = xe;
        val[hi] = fe;
      } else {
        pts[hi] = xr;
        val[hi] = fr;
      }
    } else if (fr < val[mid]) {
      pts[hi] = xr;
      val[hi] = fr;
    } else {
      const auto xc = along(fr < val[hi] ? -0.5 : 0.5);
      const double fc = consider(eval(xc));
      if (fc < std::min(fr, val[hi])) {
        pts[hi] = xc;
        val[hi] = fc;
      } else {
        for (int k : {mid, hi}) {
          pts[k] = {0.5 * (pts[k][0] + pts[lo][0]), 0.5 * (pts[k][1] + pts[lo][1])};
          val[k] = consider(eval(pts[k]));
        }
      }
    }
  }
  return best;
}

// Folds redundant affine parameters into c and d.
void canonicalize(const SymbolicEntry& e, Fit& f) {
  if (e.f == f_x) {
    f.d += f.c * f.b;
    f.c *= f.a;
    f.a = 1.0;
    f.b = 0.0;
  } else if (e.f == f_exp) {
    f.c *= std::exp(f.b);
    f.b = 0.0;
  } else if (e.f == f_sin || e.f == f_cos) {
    // Half-period shifts only flip the sign of c.
    const double n = std::round(f.b / std::numbers::pi);
    f.b -= n * std::numbers::pi;
    if (std::fmod(std::abs(n), 2.0) == 1.0) f.c = -f.c;
  }
}

// Near-ties go to the fit with the smaller shift, then to the earlier one.
const Fit* pick_simplest(const std::vector<Fit>& fits) {
  constexpr double kTie = 1e-8;
  double top = -kInf;
  for (const Fit& f : fits) top = std::max(top, f.r2);
  const Fit* pick = nullptr;
  for (const Fit& f : fits) {
    if (f.r2 < top - kTie) continue;
    if (!pick || std::abs(f.b) < std::abs(pick->b) - 1e-6) pick = &f;
  }
  return pick;
}

}  // namespace

const SymbolicLibrary& default_library() {
  static const SymbolicLibrary lib{
      {"x", f_x, always},       {"x^2", f_x2, always},      {"x^3", f_x3, always},
      {"1/x", f_inv, away_from_zero}, {"sqrt", f_sqrt, nonnegative}, {"sin", f_sin, always},
      {"cos", f_cos, always},   {"tanh", f_tanh, always},   {"exp", f_exp, always},
      {"ln", f_ln, positive},   {"abs", f_abs, always},     {"constant", f_one, always},
  };
  return lib;
}

double SnapResult::operator()(double x) const {
  if (name == "constant") return d;
  for (const SymbolicEntry& e : default_library()) {
    if (e.name == name) return c * e.f(a * x + b) + d;
  }
  throw Error("unknown symbolic entry '" + name + "'");
}

sym::LinearForm SnapResult::apply(const sym::LinearForm& arg, int digits) const {
  if (name == "constant") return sym::LinearForm(d);
  if (name == "x") return c * a * arg + sym::LinearForm(c * b + d);
  sym::LinearForm inner = a * arg + sym::LinearForm(b);
  if (name == "sin" || name == "cos") {
    // The composed argument decides between sin and cos: write c*sin(z + p)
    // with p in (-pi/2, pi/2], and switch to cos once that is the smaller shift.
    const double k = inner.constant();
    double p = k + (name == "cos" ? std::numbers::pi / 2 : 0.0);
    double sign = 1.0;
    p = std::remainder(p, 2 * std::numbers::pi);
    if (p > std::numbers::pi / 2) p -= std::numbers::pi, sign = -1.0;
    if (p <= -std::numbers::pi / 2) p += std::numbers::pi, sign = -1.0;
    const bool use_cos = p > std::numbers::pi / 4;
    double shift = use_cos ? p - std::numbers::pi / 2 : p;
    if (std::abs(shift) < 1e-6) shift = 0.0;
    inner = inner + sym::LinearForm(shift - k);
    return sym::LinearForm::atom(std::string(use_cos ? "cos" : "sin") + "(" + inner.render(digits) + ")", sign * c) +
           sym::LinearForm(d);
  }
  std::string body;
  if (name == "x^2" || name == "x^3") body = inner.render_grouped(digits) + name.substr(1);
  else if (name == "1/x") body = "1/" + inner.render_grouped(digits);
  else body = name + "(" + inner.render(digits) + ")";
  return sym::LinearForm::atom(body, c) + sym::LinearForm(d);
}

std::vector<double> probe_points(const SplineGrid& grid, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = grid.lo + (grid.hi() - grid.lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  return out;
}

SnapResult snap_samples(std::span<const double> xs, std::span<const double> ys, const SymbolicLibrary& lib,
                        double b_radius) {
  if (xs.size() != ys.size()) throw Error("snap: length mismatch");
  if (xs.size() < 20) throw Error("snap: needs at least 20 probe points");
  Scorer scorer(xs, ys);
  SnapResult out;
  const double mean = scorer.mean_y();
  const double n = static_cast<double>(ys.size());
  out.name = "constant";
  out.c = 0.0;
  out.d = mean;
  out.r2 = 1.0;
  if (!(scorer.syy() > 1e-24 * n * std::max(1.0, mean * mean))) return out;

  std::vector<double> a_grid;
  for (int i = 0; i < 21; ++i) {
    const double a = kAMin * std::pow(kAMax / kAMin, i / 20.0);
    a_grid.push_back(a);
    a_grid.push_back(-a);
  }
  std::vector<double> b_grid;
  for (int i = 0; i < 21; ++i) b_grid.push_back(-b_radius + 2.0 * b_radius * i / 20.0);

  struct Candidate {
    std::size_t entry;
    Fit fit;
  };
  std::vector<Candidate> found;
  for (std::size_t k = 0; k < lib.size(); ++k) {
    const SymbolicEntry& e = lib[k];
    if (e.name == "constant") continue;
    std::vector<Fit> coarse;
    for (double a : a_grid) {
      for (double b : b_grid) {
        Fit f = scorer.fit(e, a, b);
        if (std::isfinite(f.r2)) coarse.push_back(f);
      }
    }
    if (coarse.empty()) continue;
    const std::size_t keep = std::min<std::size_t>(6, coarse.size());
    std::partial_sort(coarse.begin(), coarse.begin() + static_cast<std::ptrdiff_t>(keep), coarse.end(),
                      [](const Fit& x, const Fit& y) {
                        if (std::abs(x.r2 - y.r2) > 1e-12) return x.r2 > y.r2;
                        return std::abs(x.b) < std::abs(y.b);
                      });
    std::vector<Fit> refined;
    for (std::size_t s = 0; s < keep; ++s) {
      refined.push_back(refine(scorer, e, coarse[s], b_radius));
      canonicalize(e, refined.back());
    }
    found.push_back({k, *pick_simplest(refined)});
  }
  if (found.empty()) {
    out.r2 = 0.0;
    return out;
  }
  std::vector<Fit> fits;
  for (const auto& c : found) fits.push_back(c.fit);
  const Candidate* pick = &found[static_cast<std::size_t>(pick_simplest(fits) - fits.data())];
  out.name = lib[pick->entry].name;
  out.a = pick->fit.a;
  out.b = pick->fit.b;
  out.c = pick->fit.c;
  out.d = pick->fit.d;
  out.r2 = pick->fit.r2;
  return out;
}

SnapResult snap_to_symbolic(const SplineActivation& act, const SymbolicLibrary& lib,
                            std::span<const double> probes) {
  act.validate();
  std::vector<double> ys;
  ys.reserve(probes.size());
  for (double x : probes) ys.push_back(activation_forward(act, x));
  // Shifts up to a_max times the range magnitude keep every probe window reachable.
  const double radius = kAMax * std::max(std::abs(act.grid.lo), std::abs(act.grid.hi()));
  return snap_samples(probes, ys, lib, radius);
}

sym::LinearForm compose_symbolic(const KanNet& net, const nn::ParameterStore& store,
                                 std::vector<sym::LinearForm> args, std::vector<EdgeReport>* edges) {
  if (args.size() != net.input_dim()) throw Error("symbolic composition needs one argument per KAN input");
  const auto& lib = default_library();
  std::vector<sym::LinearForm> cur = std::move(args);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    std::vector<sym::LinearForm> next(net.widths()[l + 1]);
    for (std::size_t i = 0; i < net.widths()[l]; ++i) {
      const auto probes = probe_points(net.grid(l, i));
      for (std::size_t j = 0; j < next.size(); ++j) {
        EdgeReport e;
        e.layer = l;
        e.from = i;
        e.to = j;
        e.snap = snap_to_symbolic(net.edge(store, l, i, j), lib, probes);
        e.pruned = e.snap.name == "constant" && std::abs(e.snap.d) < 1e-4;
        e.poor = e.snap.r2 < 0.9;
        if (!e.pruned) next[j] += e.snap.apply(cur[i]);
        if (edges) edges->push_back(e);
      }
    }
    cur = std::move(next);
  }
  return cur.at(0);
}

std::string KanModel::extract(std::span<const std::string> names, std::vector<EdgeReport>* edges) const {
  std::vector<std::string> fallback;
  if (names.empty()) {
    fallback = sym::default_names(input_dim());
    names = fallback;
  }
  if (names.size() != input_dim()) throw Error("KAN extract: one name per input is required");
  std::vector<sym::LinearForm> args;
  for (std::size_t i = 0; i < input_dim(); ++i) {
    args.push_back(scale_[i] * sym::LinearForm::atom(names[i]) + sym::LinearForm(offset_[i]));
  }
  return compose_symbolic(net_, params_, std::move(args), edges).render();
}

}  // namespace ginnkan::kan
