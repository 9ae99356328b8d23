// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ginnkan/autodiff.hpp"
#include "ginnkan/nn.hpp"
#include "ginnkan/symbolic.hpp"

namespace ginnkan::kan {

using ad::SplineGrid;

/// Uniform grid with G intervals over [lo, hi] and spline degree k.
SplineGrid make_grid(double lo, double hi, std::uint32_t intervals = 5, std::uint32_t degree = 3);
/// The G + 2k + 1 knots, k-fold extended past both ends.
std::vector<double> knots(const SplineGrid& grid);

/// Order-k basis at x, one value per coefficient (G + k). Outside the range
/// the boundary pieces are extended polynomially.
std::vector<double> bspline_basis(double x, const SplineGrid& grid);
double spline_value(const SplineGrid& grid, std::span<const double> coef, double x);

/// Least-squares coefficients of the spline closest to (xs, ys); `ridge` is
/// relative to the mean diagonal of the normal equations.
std::vector<double> fit_coefficients(const SplineGrid& grid, std::span<const double> xs,
                                     std::span<const double> ys, double ridge = 1e-14);

struct SplineActivation {
  SplineGrid grid;
  std::vector<double> coef;  // grid.basis_count() entries
  double w_base = 0.0;
  double w_spline = 1.0;

  static SplineActivation zero(const SplineGrid& grid);
  void validate() const;
};

double silu(double x);

/// w_b * silu(x) + w_s * spline(x).
double activation_forward(const SplineActivation& act, double x);
ad::Var activation_forward(ad::Graph& g, const SplineGrid& grid, ad::Var x, ad::Var silu_x,
                           std::span<const ad::Var> coef, ad::Var w_base, ad::Var w_spline);

/// Moves the knots to span the 1st..99th percentile (nearest rank) of
/// `samples` and refits the spline part by least squares. Degenerate samples
/// leave the activation unchanged.
SplineActivation update_grid(const SplineActivation& act, std::span<const double> samples);

struct KanLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<SplineActivation> acts;  // acts[i * out_dim + j] is edge i -> j

  const SplineActivation& at(std::size_t i, std::size_t j) const { return acts.at(i * out_dim + j); }
  SplineActivation& at(std::size_t i, std::size_t j) { return acts.at(i * out_dim + j); }
};

double kan_forward(std::span<const KanLayer> layers, std::span<const double> x);
/// Same network as a graph with constant coefficients.
ad::Var kan_forward(ad::Graph& g, std::span<const KanLayer> layers, std::span<const ad::Var> x);

/// KAN whose spline coefficients and weights live in a ParameterStore. Edge
/// grids are shared per layer input and kept outside the store.
class KanNet {
 public:
  struct Options {
    std::vector<std::size_t> widths{2, 5, 1};
    std::uint32_t intervals = 5;
    std::uint32_t degree = 3;
    double lo = -1.0;
    double hi = 1.0;
  };

  KanNet() = default;
  KanNet(const Options& opts, nn::ParameterStore& store, const std::string& prefix, std::mt19937_64& rng);

  std::size_t layer_count() const noexcept { return widths_.empty() ? 0 : widths_.size() - 1; }
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t input_dim() const { return widths_.front(); }
  std::uint32_t degree() const noexcept { return degree_; }
  const SplineGrid& grid(std::size_t layer, std::size_t input) const { return grids_.at(layer).at(input); }
  std::size_t parameter_count(const nn::ParameterStore& store) const;

  ad::Var forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> u) const;
  double eval(const nn::ParameterStore& store, std::span<const double> u) const;

  /// Inputs seen by every layer: result[l][i][n] for sample n.
  std::vector<std::vector<std::vector<double>>> layer_inputs(
      const nn::ParameterStore& store, std::span<const std::span<const double>> u) const;
  void update_grids(nn::ParameterStore& store, std::span<const std::span<const double>> u,
                    std::size_t from_layer = 0);

  std::vector<KanLayer> layers(const nn::ParameterStore& store) const;
  SplineActivation edge(const nn::ParameterStore& store, std::size_t l, std::size_t i, std::size_t j) const;
  void set_edge(nn::ParameterStore& store, std::size_t l, std::size_t i, std::size_t j,
                const SplineActivation& act);
  void set_grid(std::size_t l, std::size_t i, const SplineGrid& grid) { grids_.at(l).at(i) = grid; }

  nn::Json state() const;
  void load_state(const nn::Json& j, const nn::ParameterStore& store, const std::string& prefix);

 private:
  struct LayerTensors {
    std::size_t coef = 0, w_base = 0, w_spline = 0;
  };
  std::vector<std::size_t> widths_;
  std::uint32_t degree_ = 3;
  std::vector<std::vector<SplineGrid>> grids_;
  std::vector<LayerTensors> tensors_;
};

struct EdgeReport;

/// Standalone KAN with per-feature input normalization to the grid range.
class KanModel : public nn::Model {
 public:
  explicit KanModel(std::size_t input_dim, std::uint64_t seed = 0, KanNet::Options opts = {});

  std::string kind() const override { return "kan"; }
  std::size_t input_dim() const override { return net_.input_dim(); }
  std::unique_ptr<nn::Model> clone() const override { return std::make_unique<KanModel>(*this); }
  ad::Var forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> inputs) const override;
  void prepare(std::span<const std::span<const double>> inputs) override;
  bool after_step(const nn::StepContext& ctx) override;
  int max_smooth_order() const override { return static_cast<int>(net_.degree()) - 1; }
  nn::Json state() const override;
  void load_state(const nn::Json& j) override;

  const KanNet& net() const noexcept { return net_; }
  KanNet& net() noexcept { return net_; }
  /// Affine map of raw feature i onto the first-layer grid range.
  double scale(std::size_t i) const { return scale_.at(i); }
  double offset(std::size_t i) const { return offset_.at(i); }

  std::string extract(std::span<const std::string> names = {}, std::vector<EdgeReport>* edges = nullptr) const;

 private:
  KanNet net_;
  std::vector<double> scale_, offset_;
};

// -- symbolic snapping ---------------------------------------------------------

struct SymbolicEntry {
  std::string name;
  double (*f)(double);
  bool (*defined)(double);
};
using SymbolicLibrary = std::vector<SymbolicEntry>;

/// x, x^2, x^3, 1/x, sqrt, sin, cos, tanh, exp, ln, abs, constant.
const SymbolicLibrary& default_library();

struct SnapResult {
  std::string name = "constant";
  double a = 1.0, b = 0.0, c = 0.0, d = 0.0;
  double r2 = 1.0;

  double operator()(double x) const;
  /// c*f(a*arg + b) + d as a linear form over `arg`.
  sym::LinearForm apply(const sym::LinearForm& arg, int digits = 4) const;
};

/// n evenly spaced points covering the grid range.
std::vector<double> probe_points(const SplineGrid& grid, std::size_t n = 101);

/// Best c*f(a*x + b) + d over the library for samples (xs, ys).
SnapResult snap_samples(std::span<const double> xs, std::span<const double> ys, const SymbolicLibrary& lib,
                        double b_radius);
SnapResult snap_to_symbolic(const SplineActivation& act, const SymbolicLibrary& lib,
                            std::span<const double> probes);

struct EdgeReport {
  std::size_t layer = 0, from = 0, to = 0;
  SnapResult snap;
  bool pruned = false;  // constant with |d| < 1e-4
  bool poor = false;    // R^2 below 0.9
};

/// Snaps every edge of `net` and composes the results over `args`, one per
/// network input. Edges are appended to *edges when given.
sym::LinearForm compose_symbolic(const KanNet& net, const nn::ParameterStore& store,
                                 std::vector<sym::LinearForm> args, std::vector<EdgeReport>* edges = nullptr);

}  // namespace ginnkan::kan
