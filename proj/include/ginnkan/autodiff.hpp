// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ginnkan::ad {

using NodeId = std::uint32_t;

enum class Op : std::uint8_t {
  constant,
  parameter,
  input,
  add,
  sub,
  mul,
  div,
  neg,
  exp,
  ln,
  sin,
  cos,
  tanh,
  sigmoid,
  max,
  step,    // a >= b ? 1 : 0, zero derivative everywhere
  sum,     // n-ary addition
  spline,  // sum_i c_i * B_{first+i, order}(x) over a uniform knot grid
};

const char* op_name(Op op);

/// Lower clamp applied to the argument of every ln node.
inline constexpr double kLogClamp = 1e-12;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A forward pass produced NaN or Inf.
class NonFiniteError : public Error {
 public:
  NonFiniteError(NodeId node, Op op);
  NodeId node() const noexcept { return node_; }
  Op op() const noexcept { return op_; }

 private:
  NodeId node_;
  Op op_;
};

class UnboundInputError : public Error {
 public:
  using Error::Error;
};

/// Differentiating a piecewise-constant spline with respect to its argument.
class SmoothnessError : public Error {
 public:
  using Error::Error;
};

/// Uniform knot grid shared by a family of spline nodes. Knot i sits at
/// lo + (i - degree) * h; polynomial pieces are clamped to the G base
/// intervals so evaluation outside [lo, lo + G*h] extends the boundary pieces.
struct SplineGrid {
  double lo = -1.0;
  double h = 0.4;
  std::uint32_t intervals = 5;
  std::uint32_t degree = 3;

  double hi() const noexcept { return lo + h * intervals; }
  double knot(std::int64_t i) const noexcept {
    return lo + static_cast<double>(i - static_cast<std::int64_t>(degree)) * h;
  }
  std::size_t basis_count() const noexcept { return intervals + degree; }
  /// Absolute knot-interval index of the polynomial piece used at x.
  std::uint32_t piece(double x) const noexcept;
};

/// Nonzero order-q basis values at x on `piece`: out[s] = B_{piece-q+s, q}(x).
void local_basis(const SplineGrid& grid, std::uint32_t piece, std::uint32_t q,
                 double x, double* out) noexcept;

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  NodeId id() const noexcept { return id_; }
  Graph* graph() const noexcept { return graph_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  /// Value in the given lane.
  double value(std::size_t lane = 0) const;

 private:
  friend class Graph;
  Var(Graph* g, NodeId id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

/// Values for the leaves of a graph when it is re-evaluated.
struct Bindings {
  std::vector<std::pair<Var, std::span<const double>>> inputs;
  /// Parameter values indexed by slot; empty keeps the current values.
  std::span<const double> parameters;
};

/// Scalar computation graph evaluated over `lanes` independent bindings at
/// once. Semantically every lane is its own scalar graph; lanes only share
/// structure. Nodes are immutable once created and are evaluated eagerly
/// when all their leaves are bound; evaluate() replays the whole tape.
class Graph {
 public:
  explicit Graph(std::size_t lanes = 1);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t lanes() const noexcept { return lanes_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(double value);
  Var constant(std::span<const double> per_lane);
  Var zero() { return zero_; }
  Var one() { return one_; }

  /// Leaf bound from a parameter vector by slot during evaluate().
  Var parameter(double value, std::uint32_t slot);
  /// Unbound input; evaluate() must supply it.
  Var input();
  Var input(std::span<const double> per_lane);
  Var input(double broadcast);

  Op op(Var v) const { return nodes_.at(v.id()).op; }
  std::span<const NodeId> operands(Var v) const;
  std::span<const double> values(Var v) const;
  double value(Var v, std::size_t lane = 0) const;
  bool bound(Var v) const { return !pending_.at(v.id()); }

  /// Rebinds leaves and recomputes every node in one topological pass.
  /// Throws UnboundInputError or NonFiniteError.
  void evaluate(const Bindings& bindings);

  /// Per-lane derivatives of `output` with respect to each `wrt` node. With
  /// build_graph, the results are ordinary nodes and can be differentiated
  /// again; otherwise they are constants holding the derivative values.
  /// An unreachable wrt node gets the zero node.
  std::vector<Var> grad(Var output, std::span<const Var> wrt, bool build_graph);
  Var grad(Var output, Var wrt, bool build_graph);

  /// Value-only reverse pass from `output` with per-lane seeds (empty means
  /// all ones). Results stay valid until the next backward().
  void backward(Var output, std::span<const double> seed = {});
  std::span<const double> adjoint(Var v) const;
  /// Adds the lane-summed adjoint of every parameter node into by_slot.
  void accumulate_parameter_gradients(std::span<double> by_slot) const;

  std::size_t parameter_count() const noexcept { return parameter_nodes_.size(); }

  // Node constructors used by the free operator functions.
  Var make_unary(Op op, Var a);
  Var make_binary(Op op, Var a, Var b);
  Var make_sum(std::span<const Var> terms);
  Var make_spline(Var x, std::span<const Var> coefs, const SplineGrid& grid,
                  std::uint32_t order, std::uint32_t first);

 private:
  struct Node {
    Op op;
    std::uint8_t order = 0;  // spline polynomial order
    std::uint32_t ab[2] = {0, 0};
    std::uint32_t args_begin = 0;  // sum / spline operand list
    std::uint32_t nargs = 0;
    std::uint32_t grid = 0;   // spline grid index
    std::uint32_t first = 0;  // spline first basis index, or parameter slot
  };

  Var push(const Node& n);
  void compute(NodeId id);
  void check_finite(NodeId id) const;
  double* val(NodeId id) { return values_.data() + static_cast<std::size_t>(id) * lanes_; }
  const double* val(NodeId id) const {
    return values_.data() + static_cast<std::size_t>(id) * lanes_;
  }
  double* adj(NodeId id) { return adjoint_.data() + static_cast<std::size_t>(id) * lanes_; }
  std::uint32_t intern_grid(const SplineGrid& g);
  Var spline_derivative(NodeId id);
  Var spline_basis_node(NodeId id, std::uint32_t index);
  void require_same_graph(Var v) const;

  std::size_t lanes_;
  std::vector<Node> nodes_;
  std::vector<NodeId> args_;
  std::vector<double> values_;
  std::vector<char> pending_;
  std::vector<double> adjoint_;
  std::vector<SplineGrid> grids_;
  std::vector<NodeId> parameter_nodes_;
  std::vector<NodeId> input_nodes_;
  std::unordered_map<NodeId, NodeId> derivative_memo_;
  std::vector<char> touched_;
  Var zero_;
  Var one_;
  std::size_t adjoint_extent_ = 0;
};

// Arithmetic on Vars. Mixed double operands become constant nodes.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);

Var exp(Var a);
Var log(Var a);
Var sin(Var a);
Var cos(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var max(Var a, Var b);
Var step(Var a, Var b);
Var square(Var a);
/// x^n by repeated multiplication (n >= 0).
Var powi(Var a, int n);
/// x^w = exp(w * ln x); inherits the ln clamp.
Var pow(Var x, Var w);
Var pow(Var x, double w);
Var silu(Var x);
Var sum(std::span<const Var> terms);

using ScalarBuilder = std::function<Var(Graph&, std::span<const Var>)>;

/// Largest discrepancy between reverse-mode gradients of f and central
/// finite differences at `point`, measured as |g - fd| / max(1, |fd|).
double check_gradient(const ScalarBuilder& f, std::span<const double> point, double eps);

}  // namespace ginnkan::ad
