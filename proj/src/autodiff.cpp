// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ginnkan::ad {

namespace {

constexpr std::uint32_t kMaxOrder = 7;

bool is_leaf(Op op) { return op == Op::constant || op == Op::parameter || op == Op::input; }

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::constant: return "constant";
    case Op::parameter: return "parameter";
    case Op::input: return "input";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::neg: return "neg";
    case Op::exp: return "exp";
    case Op::ln: return "ln";
    case Op::sin: return "sin";
    case Op::cos: return "cos";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::max: return "max";
    case Op::step: return "step";
    case Op::sum: return "sum";
    case Op::spline: return "spline";
  }
  return "?";
}

NonFiniteError::NonFiniteError(NodeId node, Op op)
    : Error("non-finite value at node " + std::to_string(node) + " (" + op_name(op) + ")"),
      node_(node),
      op_(op) {}

std::uint32_t SplineGrid::piece(double x) const noexcept {
  const double u = (x - lo) / h;
  std::uint32_t j = 0;
  if (u > 0.0) j = u >= intervals ? intervals - 1 : static_cast<std::uint32_t>(u);
  return degree + j;
}

void local_basis(const SplineGrid& grid, std::uint32_t piece, std::uint32_t q, double x,
                 double* out) noexcept {
  double left[kMaxOrder + 1];
  double right[kMaxOrder + 1];
  out[0] = 1.0;
  for (std::uint32_t r = 1; r <= q; ++r) {
    left[r] = x - grid.knot(static_cast<std::int64_t>(piece) + 1 - r);
    right[r] = grid.knot(static_cast<std::int64_t>(piece) + r) - x;
    double saved = 0.0;
    for (std::uint32_t s = 0; s < r; ++s) {
      const double tmp = out[s] / (right[s + 1] + left[r - s]);
      out[s] = saved + right[s + 1] * tmp;
      saved = left[r - s] * tmp;
    }
    out[r] = saved;
  }
}

double Var::value(std::size_t lane) const {
  if (!graph_) throw Error("value() on an empty Var");
  return graph_->value(*this, lane);
}

Graph::Graph(std::size_t lanes) : lanes_(lanes) {
  if (lanes_ == 0) throw Error("graph needs at least one lane");
  zero_ = constant(0.0);
  one_ = constant(1.0);
}

Var Graph::push(const Node& n) {
  if (nodes_.size() >= std::numeric_limits<NodeId>::max()) throw Error("graph too large");
  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_.push_back(n);
  values_.resize(values_.size() + lanes_, 0.0);
  pending_.push_back(0);
  return Var(this, id);
}

Var Graph::constant(double value) {
  Var v = push(Node{Op::constant});
  std::fill_n(val(v.id()), lanes_, value);
  return v;
}

Var Graph::constant(std::span<const double> per_lane) {
  if (per_lane.size() != lanes_) throw Error("constant: lane count mismatch");
  Var v = push(Node{Op::constant});
  std::copy(per_lane.begin(), per_lane.end(), val(v.id()));
  return v;
}

Var Graph::parameter(double value, std::uint32_t slot) {
  Node n{Op::parameter};
  n.first = slot;
  Var v = push(n);
  std::fill_n(val(v.id()), lanes_, value);
  parameter_nodes_.push_back(v.id());
  check_finite(v.id());
  return v;
}

Var Graph::input() {
  Var v = push(Node{Op::input});
  std::fill_n(val(v.id()), lanes_, std::numeric_limits<double>::quiet_NaN());
  pending_[v.id()] = 1;
  input_nodes_.push_back(v.id());
  return v;
}

Var Graph::input(std::span<const double> per_lane) {
  if (per_lane.size() != lanes_) throw Error("input: lane count mismatch");
  Var v = push(Node{Op::input});
  std::copy(per_lane.begin(), per_lane.end(), val(v.id()));
  input_nodes_.push_back(v.id());
  check_finite(v.id());
  return v;
}

Var Graph::input(double broadcast) {
  Var v = push(Node{Op::input});
  std::fill_n(val(v.id()), lanes_, broadcast);
  input_nodes_.push_back(v.id());
  check_finite(v.id());
  return v;
}

std::span<const NodeId> Graph::operands(Var v) const {
  const Node& n = nodes_.at(v.id());
  switch (n.op) {
    case Op::constant:
    case Op::parameter:
    case Op::input: return {};
    case Op::sum:
    case Op::spline: return {args_.data() + n.args_begin, n.nargs};
    case Op::neg:
    case Op::exp:
    case Op::ln:
    case Op::sin:
    case Op::cos:
    case Op::tanh:
    case Op::sigmoid: return {nodes_[v.id()].ab, 1};
    default: return {nodes_[v.id()].ab, 2};
  }
}

std::span<const double> Graph::values(Var v) const {
  if (v.id() >= nodes_.size()) throw Error("values: unknown node");
  return {val(v.id()), lanes_};
}

double Graph::value(Var v, std::size_t lane) const {
  if (v.id() >= nodes_.size() || lane >= lanes_) throw Error("value: out of range");
  return val(v.id())[lane];
}

void Graph::require_same_graph(Var v) const {
  if (v.graph() != this) throw Error("operand belongs to a different graph");
}

Var Graph::make_unary(Op op, Var a) {
  require_same_graph(a);
  Node n{op};
  n.ab[0] = a.id();
  Var v = push(n);
  compute(v.id());
  return v;
}

Var Graph::make_binary(Op op, Var a, Var b) {
  require_same_graph(a);
  require_same_graph(b);
  Node n{op};
  n.ab[0] = a.id();
  n.ab[1] = b.id();
  Var v = push(n);
  compute(v.id());
  return v;
}

Var Graph::make_sum(std::span<const Var> terms) {
  if (terms.empty()) return zero_;
  if (terms.size() == 1) return terms[0];
  Node n{Op::sum};
  n.args_begin = static_cast<std::uint32_t>(args_.size());
  n.nargs = static_cast<std::uint32_t>(terms.size());
  for (Var t : terms) {
    require_same_graph(t);
    args_.push_back(t.id());
  }
  Var v = push(n);
  compute(v.id());
  return v;
}

std::uint32_t Graph::intern_grid(const SplineGrid& g) {
  for (std::size_t i = 0; i < grids_.size(); ++i) {
    const auto& e = grids_[i];
    if (e.lo == g.lo && e.h == g.h && e.intervals == g.intervals && e.degree == g.degree)
      return static_cast<std::uint32_t>(i);
  }
  grids_.push_back(g);
  return static_cast<std::uint32_t>(grids_.size() - 1);
}

Var Graph::make_spline(Var x, std::span<const Var> coefs, const SplineGrid& grid,
                       std::uint32_t order, std::uint32_t first) {
  if (order > kMaxOrder || order > grid.degree) throw Error("spline: unsupported order");
  if (!(grid.h > 0.0) || grid.intervals == 0) throw Error("spline: invalid grid");
  if (coefs.empty()) return zero_;
  require_same_graph(x);
  Node n{Op::spline};
  n.order = static_cast<std::uint8_t>(order);
  n.grid = intern_grid(grid);
  n.first = first;
  n.args_begin = static_cast<std::uint32_t>(args_.size());
  n.nargs = static_cast<std::uint32_t>(coefs.size() + 1);
  args_.push_back(x.id());
  for (Var c : coefs) {
    require_same_graph(c);
    args_.push_back(c.id());
  }
  Var v = push(n);
  compute(v.id());
  return v;
}

void Graph::check_finite(NodeId id) const {
  const double* v = val(id);
  bool bad = false;
  for (std::size_t l = 0; l < lanes_; ++l) bad |= !(std::abs(v[l]) <= std::numeric_limits<double>::max());
  if (bad) throw NonFiniteError(id, nodes_[id].op);
}

void Graph::compute(NodeId id) {
  const Node n = nodes_[id];
  const std::size_t L = lanes_;
  if (n.op == Op::sum || n.op == Op::spline) {
    for (std::uint32_t i = 0; i < n.nargs; ++i) {
      if (pending_[args_[n.args_begin + i]]) {
        pending_[id] = 1;
        return;
      }
    }
  } else {
    const bool binary = !(n.op == Op::neg || n.op == Op::exp || n.op == Op::ln ||
                          n.op == Op::sin || n.op == Op::cos || n.op == Op::tanh ||
                          n.op == Op::sigmoid);
    if (pending_[n.ab[0]] || (binary && pending_[n.ab[1]])) {
      pending_[id] = 1;
      return;
    }
  }
  pending_[id] = 0;
  double* c = val(id);
  const double* a = val(n.ab[0]);
  const double* b = val(n.ab[1]);
  switch (n.op) {
    case Op::constant:
    case Op::parameter:
    case Op::input: return;
    case Op::add:
      for (std::size_t l = 0; l < L; ++l) c[l] = a[l] + b[l];
      break;
    case Op::sub:
      for (std::size_t l = 0; l < L; ++l) c[l] = a[l] - b[l];
      break;
    case Op::mul:
      for (std::size_t l = 0; l < L; ++l) c[l] = a[l] * b[l];
      break;
    case Op::div:
      for (std::size_t l = 0; l < L; ++l) c[l] = a[l] / b[l];
      break;
    case Op::neg:
      for (std::size_t l = 0; l < L; ++l) c[l] = -a[l];
      break;
    case Op::exp:
      for (std::size_t l = 0; l < L; ++l) c[l] = std::exp(a[l]);
      break;
    case Op::ln:
      for (std::size_t l = 0; l < L; ++l) c[l] = std::log(std::max(a[l], kLogClamp));
      break;
    case Op::sin:
      for (std::size_t l = 0; l < L; ++l) c[l] = std::sin(a[l]);
      break;
    case Op::cos:
      for (std::size_t l = 0; l < L; ++l) c[l] = std::cos(a[l]);
      break;
    case Op::tanh:
      for (std::size_t l = 0; l < L; ++l) c[l] = std::tanh(a[l]);
      break;
    case Op::sigmoid:
      for (std::size_t l = 0; l < L; ++l) c[l] = 1.0 / (1.0 + std::exp(-a[l]));
      break;
    case Op::max:
      for (std::size_t l = 0; l < L; ++l) c[l] = a[l] >= b[l] ? a[l] : b[l];
      break;
    case Op::step:
      for (std::size_t l = 0; l < L; ++l) c[l] = a[l] >= b[l] ? 1.0 : 0.0;
      break;
    case Op::sum: {
      const NodeId* args = args_.data() + n.args_begin;
      const double* first = val(args[0]);
      std::copy_n(first, L, c);
      for (std::uint32_t i = 1; i < n.nargs; ++i) {
        const double* t = val(args[i]);
        for (std::size_t l = 0; l < L; ++l) c[l] += t[l];
      }
      break;
    }
    case Op::spline: {
      const NodeId* args = args_.data() + n.args_begin;
      const SplineGrid& grid = grids_[n.grid];
      const double* x = val(args[0]);
      const std::int64_t ncoef = n.nargs - 1;
      double basis[kMaxOrder + 1];
      for (std::size_t l = 0; l < L; ++l) {
        const std::uint32_t piece = grid.piece(x[l]);
        local_basis(grid, piece, n.order, x[l], basis);
        double acc = 0.0;
        const std::int64_t base = static_cast<std::int64_t>(piece) - n.order - n.first;
        for (std::uint32_t s = 0; s <= n.order; ++s) {
          const std::int64_t i = base + s;
          if (i >= 0 && i < ncoef) acc += basis[s] * val(args[1 + i])[l];
        }
        c[l] = acc;
      }
      break;
    }
  }
  check_finite(id);
}

void Graph::evaluate(const Bindings& bindings) {
  for (const auto& [var, data] : bindings.inputs) {
    require_same_graph(var);
    if (nodes_[var.id()].op != Op::input) throw Error("binding targets a non-input node");
    double* dst = val(var.id());
    if (data.size() == lanes_) {
      std::copy(data.begin(), data.end(), dst);
    } else if (data.size() == 1) {
      std::fill_n(dst, lanes_, data[0]);
    } else {
      throw Error("binding: lane count mismatch");
    }
    pending_[var.id()] = 0;
    check_finite(var.id());
  }
  if (!bindings.parameters.empty()) {
    for (NodeId p : parameter_nodes_) {
      const std::uint32_t slot = nodes_[p].first;
      if (slot >= bindings.parameters.size()) throw Error("binding: parameter slot out of range");
      std::fill_n(val(p), lanes_, bindings.parameters[slot]);
      check_finite(p);
    }
  }
  for (NodeId i : input_nodes_) {
    if (pending_[i]) throw UnboundInputError("input node " + std::to_string(i) + " is unbound");
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (!is_leaf(nodes_[id].op)) compute(id);
  }
}

Var Graph::spline_derivative(NodeId id) {
  if (auto it = derivative_memo_.find(id); it != derivative_memo_.end()) return Var(this, it->second);
  const Node n = nodes_[id];
  if (n.order == 0) {
    throw SmoothnessError("spline of order 0 differentiated with respect to its argument");
  }
  const SplineGrid grid = grids_[n.grid];
  const std::uint32_t q = n.order - 1;
  const std::int64_t ncoef = n.nargs - 1;
  const double inv_h = 1.0 / grid.h;
  // d/dx B_{m,q+1} = (B_{m,q} - B_{m+1,q}) / h on a uniform grid.
  std::vector<Var> coefs;
  std::uint32_t first = 0;
  bool started = false;
  for (std::int64_t k = 0; k <= ncoef; ++k) {
    const std::int64_t m = static_cast<std::int64_t>(n.first) + k;
    const bool alive = m + q >= grid.degree && m <= grid.degree + grid.intervals - 1;
    if (!alive) continue;
    Var ck = k < ncoef ? Var(this, args_[n.args_begin + 1 + k]) : Var();
    Var cprev = k > 0 ? Var(this, args_[n.args_begin + k]) : Var();
    Var e;
    if (ck.valid() && cprev.valid()) {
      e = (ck - cprev) * inv_h;
    } else if (ck.valid()) {
      e = ck * inv_h;
    } else {
      e = cprev * (-inv_h);
    }
    if (!started) {
      first = static_cast<std::uint32_t>(m);
      started = true;
    }
    coefs.push_back(e);
  }
  Var x(this, args_[n.args_begin]);
  Var d = make_spline(x, coefs, grid, q, first);
  derivative_memo_[id] = d.id();
  return d;
}

Var Graph::spline_basis_node(NodeId id, std::uint32_t index) {
  const Node n = nodes_[id];
  Var x(this, args_[n.args_begin]);
  const Var one[1] = {one_};
  return make_spline(x, one, grids_[n.grid], n.order, n.first + index);
}

std::vector<Var> Graph::grad(Var output, std::span<const Var> wrt, bool build_graph) {
  require_same_graph(output);
  for (Var w : wrt) require_same_graph(w);
  if (!build_graph) {
    backward(output);
    std::vector<Var> out;
    out.reserve(wrt.size());
    for (Var w : wrt) {
      if (w.id() > output.id() || !touched_[w.id()]) {
        out.push_back(zero_);
      } else {
        out.push_back(constant(adjoint(w)));
      }
    }
    return out;
  }

  const NodeId top = output.id();
  const std::size_t count = static_cast<std::size_t>(top) + 1;
  std::vector<char> dep(count, 0);
  for (Var w : wrt) {
    if (w.id() <= top) dep[w.id()] = 1;
  }
  for (NodeId id = 0; id < count; ++id) {
    if (dep[id]) continue;
    const Node& n = nodes_[id];
    if (is_leaf(n.op)) continue;
    for (NodeId o : operands(Var(this, id))) {
      if (dep[o]) {
        dep[id] = 1;
        break;
      }
    }
    (void)n;
  }

  std::vector<std::vector<NodeId>> contrib(count);
  std::vector<NodeId> adjoint_node(count, zero_.id());
  std::vector<char> done(count, 0);
  if (dep[top]) contrib[top].push_back(one_.id());

  auto add_to = [&](NodeId target, Var term) {
    if (dep[target]) contrib[target].push_back(term.id());
  };

  for (std::int64_t sid = top; sid >= 0; --sid) {
    const auto id = static_cast<NodeId>(sid);
    if (!dep[id] || contrib[id].empty()) continue;
    Var g;
    if (contrib[id].size() == 1) {
      g = Var(this, contrib[id][0]);
    } else {
      std::vector<Var> terms;
      terms.reserve(contrib[id].size());
      for (NodeId t : contrib[id]) terms.push_back(Var(this, t));
      g = make_sum(terms);
    }
    contrib[id].clear();
    contrib[id].shrink_to_fit();
    adjoint_node[id] = g.id();
    done[id] = 1;

    const Node n = nodes_[id];
    if (is_leaf(n.op)) continue;
    Var self(this, id);
    Var a(this, n.ab[0]);
    Var b(this, n.ab[1]);
    switch (n.op) {
      case Op::constant:
      case Op::parameter:
      case Op::input: break;
      case Op::add:
        add_to(n.ab[0], g);
        add_to(n.ab[1], g);
        break;
      case Op::sub:
        add_to(n.ab[0], g);
        if (dep[n.ab[1]]) add_to(n.ab[1], -g);
        break;
      case Op::mul:
        if (dep[n.ab[0]]) add_to(n.ab[0], g * b);
        if (dep[n.ab[1]]) add_to(n.ab[1], g * a);
        break;
      case Op::div:
        if (dep[n.ab[0]]) add_to(n.ab[0], g / b);
        if (dep[n.ab[1]]) add_to(n.ab[1], -(g * self / b));
        break;
      case Op::neg: add_to(n.ab[0], -g); break;
      case Op::exp: add_to(n.ab[0], g * self); break;
      case Op::ln: add_to(n.ab[0], g / max(a, constant(kLogClamp))); break;
      case Op::sin: add_to(n.ab[0], g * cos(a)); break;
      case Op::cos: add_to(n.ab[0], -(g * sin(a))); break;
      case Op::tanh: add_to(n.ab[0], g * (1.0 - self * self)); break;
      case Op::sigmoid: add_to(n.ab[0], g * (self * (1.0 - self))); break;
      case Op::max: {
        Var s = step(a, b);
        if (dep[n.ab[0]]) add_to(n.ab[0], g * s);
        if (dep[n.ab[1]]) add_to(n.ab[1], g * (1.0 - s));
        break;
      }
      case Op::step: break;
      case Op::sum:
        for (std::uint32_t i = 0; i < n.nargs; ++i) add_to(args_[n.args_begin + i], g);
        break;
      case Op::spline: {
        const NodeId x = args_[n.args_begin];
        if (dep[x]) add_to(x, g * spline_derivative(id));
        for (std::uint32_t i = 1; i < n.nargs; ++i) {
          const NodeId c = args_[n.args_begin + i];
          if (dep[c]) add_to(c, g * spline_basis_node(id, i - 1));
        }
        break;
      }
    }
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (Var w : wrt) {
    out.push_back(Var(this, (w.id() <= top && done[w.id()]) ? adjoint_node[w.id()] : zero_.id()));
  }
  return out;
}

Var Graph::grad(Var output, Var wrt, bool build_graph) {
  const Var w[1] = {wrt};
  return grad(output, w, build_graph)[0];
}

void Graph::backward(Var output, std::span<const double> seed) {
  require_same_graph(output);
  const NodeId top = output.id();
  const std::size_t count = static_cast<std::size_t>(top) + 1;
  const std::size_t L = lanes_;
  if (!seed.empty() && seed.size() != L) throw Error("backward: seed lane count mismatch");
  if (adjoint_.size() < count * L) adjoint_.resize(count * L);
  std::fill_n(adjoint_.begin(), count * L, 0.0);
  touched_.assign(count, 0);
  adjoint_extent_ = count;
  {
    double* g = adj(top);
    if (seed.empty()) {
      std::fill_n(g, L, 1.0);
    } else {
      std::copy(seed.begin(), seed.end(), g);
    }
    touched_[top] = 1;
  }

  double basis[kMaxOrder + 1];
  double lower[kMaxOrder + 2];
  for (std::int64_t sid = top; sid >= 0; --sid) {
    const auto id = static_cast<NodeId>(sid);
    if (!touched_[id]) continue;
    const Node& n = nodes_[id];
    if (is_leaf(n.op)) continue;
    const double* g = adj(id);
    const double* c = val(id);
    const double* a = val(n.ab[0]);
    const double* b = val(n.ab[1]);
    double* ga = adj(n.ab[0]);
    double* gb = adj(n.ab[1]);
    switch (n.op) {
      case Op::constant:
      case Op::parameter:
      case Op::input: break;
      case Op::add:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l];
        for (std::size_t l = 0; l < L; ++l) gb[l] += g[l];
        touched_[n.ab[0]] = touched_[n.ab[1]] = 1;
        break;
      case Op::sub:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l];
        for (std::size_t l = 0; l < L; ++l) gb[l] -= g[l];
        touched_[n.ab[0]] = touched_[n.ab[1]] = 1;
        break;
      case Op::mul:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * b[l];
        for (std::size_t l = 0; l < L; ++l) gb[l] += g[l] * a[l];
        touched_[n.ab[0]] = touched_[n.ab[1]] = 1;
        break;
      case Op::div:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] / b[l];
        for (std::size_t l = 0; l < L; ++l) gb[l] -= g[l] * c[l] / b[l];
        touched_[n.ab[0]] = touched_[n.ab[1]] = 1;
        break;
      case Op::neg:
        for (std::size_t l = 0; l < L; ++l) ga[l] -= g[l];
        touched_[n.ab[0]] = 1;
        break;
      case Op::exp:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * c[l];
        touched_[n.ab[0]] = 1;
        break;
      case Op::ln:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] / std::max(a[l], kLogClamp);
        touched_[n.ab[0]] = 1;
        break;
      case Op::sin:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * std::cos(a[l]);
        touched_[n.ab[0]] = 1;
        break;
      case Op::cos:
        for (std::size_t l = 0; l < L; ++l) ga[l] -= g[l] * std::sin(a[l]);
        touched_[n.ab[0]] = 1;
        break;
      case Op::tanh:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * (1.0 - c[l] * c[l]);
        touched_[n.ab[0]] = 1;
        break;
      case Op::sigmoid:
        for (std::size_t l = 0; l < L; ++l) ga[l] += g[l] * c[l] * (1.0 - c[l]);
        touched_[n.ab[0]] = 1;
        break;
      case Op::max:
        for (std::size_t l = 0; l < L; ++l) {
          if (a[l] >= b[l]) {
            ga[l] += g[l];
          } else {
            gb[l] += g[l];
          }
        }
        touched_[n.ab[0]] = touched_[n.ab[1]] = 1;
        break;
      case Op::step: break;
      case Op::sum:
        for (std::uint32_t i = 0; i < n.nargs; ++i) {
          const NodeId t = args_[n.args_begin + i];
          double* gt = adj(t);
          for (std::size_t l = 0; l < L; ++l) gt[l] += g[l];
          touched_[t] = 1;
        }
        break;
      case Op::spline: {
        const NodeId* args = args_.data() + n.args_begin;
        const SplineGrid& grid = grids_[n.grid];
        const double* x = val(args[0]);
        double* gx = adj(args[0]);
        const std::int64_t ncoef = n.nargs - 1;
        const double inv_h = 1.0 / grid.h;
        for (std::size_t l = 0; l < L; ++l) {
          if (g[l] == 0.0) continue;
          const std::uint32_t piece = grid.piece(x[l]);
          const std::int64_t base = static_cast<std::int64_t>(piece) - n.order - n.first;
          local_basis(grid, piece, n.order, x[l], basis);
          for (std::uint32_t s = 0; s <= n.order; ++s) {
            const std::int64_t i = base + s;
            if (i >= 0 && i < ncoef) adj(args[1 + i])[l] += g[l] * basis[s];
          }
          if (n.order > 0) {
            // lower[t + 1] = B_{piece - order + 1 + t, order - 1}(x)
            lower[0] = 0.0;
            local_basis(grid, piece, n.order - 1u, x[l], lower + 1);
            lower[n.order + 1] = 0.0;
            double d = 0.0;
            for (std::uint32_t s = 0; s <= n.order; ++s) {
              const std::int64_t i = base + s;
              if (i >= 0 && i < ncoef) d += val(args[1 + i])[l] * (lower[s] - lower[s + 1]) * inv_h;
            }
            gx[l] += g[l] * d;
          }
        }
        for (std::uint32_t i = 0; i < n.nargs; ++i) touched_[args[i]] = 1;
        break;
      }
    }
  }
}

std::span<const double> Graph::adjoint(Var v) const {
  if (v.id() >= adjoint_extent_) throw Error("adjoint: node outside the last backward pass");
  return {adjoint_.data() + static_cast<std::size_t>(v.id()) * lanes_, lanes_};
}

void Graph::accumulate_parameter_gradients(std::span<double> by_slot) const {
  for (NodeId p : parameter_nodes_) {
    if (p >= adjoint_extent_ || !touched_[p]) continue;
    const std::uint32_t slot = nodes_[p].first;
    if (slot >= by_slot.size()) throw Error("gradient slot out of range");
    const double* g = adjoint_.data() + static_cast<std::size_t>(p) * lanes_;
    double total = 0.0;
    for (std::size_t l = 0; l < lanes_; ++l) total += g[l];
    by_slot[slot] += total;
  }
}

// ---------------------------------------------------------------------------

namespace {
Graph& graph_of(Var a) {
  if (!a.valid()) throw Error("operation on an empty Var");
  return *a.graph();
}
}  // namespace

Var operator+(Var a, Var b) { return graph_of(a).make_binary(Op::add, a, b); }
Var operator-(Var a, Var b) { return graph_of(a).make_binary(Op::sub, a, b); }
Var operator*(Var a, Var b) { return graph_of(a).make_binary(Op::mul, a, b); }
Var operator/(Var a, Var b) { return graph_of(a).make_binary(Op::div, a, b); }
Var operator-(Var a) { return graph_of(a).make_unary(Op::neg, a); }
Var operator+(Var a, double b) { return a + graph_of(a).constant(b); }
Var operator+(double a, Var b) { return graph_of(b).constant(a) + b; }
Var operator-(Var a, double b) { return a - graph_of(a).constant(b); }
Var operator-(double a, Var b) { return graph_of(b).constant(a) - b; }
Var operator*(Var a, double b) { return a * graph_of(a).constant(b); }
Var operator*(double a, Var b) { return graph_of(b).constant(a) * b; }
Var operator/(Var a, double b) { return a / graph_of(a).constant(b); }
Var operator/(double a, Var b) { return graph_of(b).constant(a) / b; }

Var exp(Var a) { return graph_of(a).make_unary(Op::exp, a); }
Var log(Var a) { return graph_of(a).make_unary(Op::ln, a); }
Var sin(Var a) { return graph_of(a).make_unary(Op::sin, a); }
Var cos(Var a) { return graph_of(a).make_unary(Op::cos, a); }
Var tanh(Var a) { return graph_of(a).make_unary(Op::tanh, a); }
Var sigmoid(Var a) { return graph_of(a).make_unary(Op::sigmoid, a); }
Var max(Var a, Var b) { return graph_of(a).make_binary(Op::max, a, b); }
Var step(Var a, Var b) { return graph_of(a).make_binary(Op::step, a, b); }
Var square(Var a) { return a * a; }

Var powi(Var a, int n) {
  if (n < 0) throw Error("powi: negative exponent");
  if (n == 0) return graph_of(a).one();
  Var r = a;
  for (int i = 1; i < n; ++i) r = r * a;
  return r;
}

Var pow(Var x, Var w) { return exp(w * log(x)); }
Var pow(Var x, double w) { return exp(w * log(x)); }
Var silu(Var x) { return x * sigmoid(x); }

Var sum(std::span<const Var> terms) {
  if (terms.empty()) throw Error("sum of no terms");
  return graph_of(terms[0]).make_sum(terms);
}

double check_gradient(const ScalarBuilder& f, std::span<const double> point, double eps) {
  Graph g(1);
  std::vector<Var> inputs;
  inputs.reserve(point.size());
  for (double p : point) inputs.push_back(g.input(p));
  Var out = f(g, inputs);
  const std::vector<Var> grads = g.grad(out, inputs, false);
  std::vector<double> analytic;
  analytic.reserve(grads.size());
  for (Var v : grads) analytic.push_back(v.value());

  std::vector<double> shifted(point.begin(), point.end());
  auto eval_at = [&]() {
    Bindings b;
    for (std::size_t i = 0; i < inputs.size(); ++i) b.inputs.emplace_back(inputs[i], std::span<const double>(&shifted[i], 1));
    g.evaluate(b);
    return out.value();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    shifted[i] = point[i] + eps;
    const double up = eval_at();
    shifted[i] = point[i] - eps;
    const double down = eval_at();
    shifted[i] = point[i];
    const double fd = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
  }
  eval_at();
  return worst;
}

}  // namespace ginnkan::ad
