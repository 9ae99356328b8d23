// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ginnkan/autodiff.hpp"
#include "ginnkan/nn.hpp"

namespace ginnkan::pinn {

/// Model output and the input derivatives a residual may use. Unrequested
/// derivatives are invalid Vars.
struct Fields {
  ad::Var x, t, u, ux, ut, uxx, utt;
};

struct InitialCondition {
  int t_order = 0;  // 0: u(x,0) = f(x); 1: du/dt(x,0) = f(x)
  std::function<double(double)> f;
};

struct BoundaryCondition {
  bool periodic = false;  // u(x_lo,t) = u(x_hi,t)
  double x = 0.0;         // location of a Dirichlet condition u(x,t) = g(t)
  std::function<double(double)> g;
};

struct PdeProblem {
  std::string id;
  std::string name;
  double x_lo = 0.0, x_hi = 1.0, t_hi = 1.0;
  int order_x = 1, order_t = 1;
  bool lp = false;  // Laurent-polynomial ground truth
  std::function<ad::Var(ad::Graph&, const Fields&)> residual;
  std::vector<InitialCondition> ics;
  std::vector<BoundaryCondition> bcs;
  std::function<double(double, double)> solution;
  /// The same solution as a graph, used to check the registry itself.
  std::function<ad::Var(ad::Var, ad::Var)> solution_graph;
};

/// The 15 problems in table order.
const std::vector<PdeProblem>& registry();
const PdeProblem& problem(std::string_view id);

struct PointSet {
  std::vector<double> x, t;
  std::size_t size() const noexcept { return x.size(); }
};

struct CollocationSet {
  PointSet interior;
  std::vector<PointSet> ic;  // one per initial condition, t = 0
  std::vector<PointSet> bc;  // one per boundary condition; x is unused for periodic ones
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kConstraintPoints = 256;

CollocationSet sample_collocation(const PdeProblem& p, std::size_t n = 2500, std::uint64_t seed = 0,
                                  std::size_t constraint_points = kConstraintPoints);

/// Every point of a collocation set, as (x, t) columns.
std::array<std::vector<double>, 2> all_points(const CollocationSet& c);

/// u and its input derivatives up to the given orders, built on the graph
/// of u. Throws ad::SmoothnessError when u is not smooth enough.
Fields fields_of(ad::Graph& g, ad::Var u, ad::Var x, ad::Var t, int order_x, int order_t);
Fields fields(ad::Graph& g, const nn::Model& model, const nn::ParamNodes& params, ad::Var x, ad::Var t,
              int order_x, int order_t);

struct LossParts {
  double physics = 0.0, ic = 0.0, bc = 0.0;
  double total(double ic_weight = 1.0, double bc_weight = 1.0) const { return physics + ic_weight * ic + bc_weight * bc; }
};

/// physics + ic_weight * IC + bc_weight * BC, each a mean of squares over
/// its point set. Graphs are built once and replayed until invalidate().
class PinnLoss {
 public:
  PinnLoss(const PdeProblem& p, const CollocationSet& c, double ic_weight = 1.0, double bc_weight = 1.0,
           bool fast_paths = true);
  ~PinnLoss();
  PinnLoss(PinnLoss&&) noexcept;

  /// Loss parts; when grad is non-empty the total's parameter gradient is
  /// added to it.
  LossParts evaluate(const nn::Model& model, std::span<double> grad);
  void invalidate();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Throws nn::Error if the model cannot carry the derivatives p needs.
void check_smoothness(const PdeProblem& p, const nn::Model& model);

nn::TrainConfig default_config();

struct SolveResult {
  std::unique_ptr<nn::Model> model;
  std::vector<double> loss_history;
  double mse = 0.0;          // on the interior training points
  double heldout_mse = 0.0;  // on a fresh interior sample of the same size
  double seconds = 0.0;
};

/// Trains `model` in place on p.
SolveResult train_pinn(std::unique_ptr<nn::Model> model, const PdeProblem& p, const nn::TrainConfig& config,
                       std::size_t n = 2500);
SolveResult solve(const PdeProblem& p, std::string_view kind, const nn::TrainConfig& config, std::size_t n = 2500);

struct SuiteCell {
  std::string pde, model;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double heldout_mse = 0.0;
  double seconds = 0.0;
  std::string failure;  // empty on success
};

struct SuiteSummary {
  std::vector<std::string> pdes, models;
  std::vector<std::vector<double>> median;  // [pde][model], +inf if failed
  std::vector<std::vector<double>> rank;    // [pde][model]
  std::vector<double> mean_rank, mean_rank_non_lp;  // NaN for an empty group
};

/// Called from worker threads for every successful cell.
using CellCallback = std::function<void(const SuiteCell&, const SolveResult&)>;

/// Runs every (problem, kind, seed) cell; failures are recorded, not thrown.
std::vector<SuiteCell> run_suite(const std::vector<std::string>& pdes, const std::vector<std::string>& kinds,
                                 const std::vector<std::uint64_t>& seeds, const nn::TrainConfig& config,
                                 std::size_t jobs = 1, std::size_t n = 2500, const CellCallback& on_result = {});

/// Medians over seeds, per-PDE ranks (ties averaged, failures worst) and
/// mean ranks overall and excluding the LP problems. Rows follow registry
/// order; ids outside the registry come last and count as non-LP.
SuiteSummary summarize(const std::vector<SuiteCell>& cells, const std::vector<std::string>& model_order = {});

}  // namespace ginnkan::pinn
