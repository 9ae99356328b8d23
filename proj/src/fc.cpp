// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/fc.hpp"

#include <cmath>
#include <random>

namespace ginnkan::fc {

using nn::Error;
using nn::Matrix;
using nn::Vector;

namespace {

std::string weight_name(std::size_t l) { return "layer" + std::to_string(l) + ".weight"; }
std::string bias_name(std::size_t l) { return "layer" + std::to_string(l) + ".bias"; }

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

FcModel::FcModel(std::size_t input_dim, std::vector<std::size_t> hidden, std::uint64_t seed) {
  if (input_dim == 0) throw Error("FC network needs at least one input");
  widths_.push_back(input_dim);
  for (std::size_t h : hidden) {
    if (h == 0) throw Error("FC hidden layers must be non-empty");
    widths_.push_back(h);
  }
  widths_.push_back(1);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    const double r = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-r, r);
    std::vector<double> w(in * out), b(out);
    for (double& v : w) v = u(rng);
    for (double& v : b) v = u(rng);
    params_.add(weight_name(l), {out, in}, std::move(w));
    params_.add(bias_name(l), {out}, std::move(b));
  }
}

void FcModel::load_state(const nn::Json& j) {
  widths_ = j.at("widths").get<std::vector<std::size_t>>();
  if (widths_.size() < 2 || widths_.back() != 1) throw Error("FC state has invalid widths");
}

ad::Var FcModel::forward(ad::Graph& g, const nn::ParamNodes& params, std::span<const ad::Var> inputs) const {
  if (inputs.size() != input_dim()) throw Error("FC input dimension mismatch");
  std::vector<ad::Var> a(inputs.begin(), inputs.end());
  (void)g;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const std::size_t in = widths_[l], out = widths_[l + 1];
    const std::size_t wi = 2 * l, bi = 2 * l + 1;
    std::vector<ad::Var> next;
    next.reserve(out);
    for (std::size_t o = 0; o < out; ++o) {
      std::vector<ad::Var> terms;
      terms.reserve(in + 1);
      for (std::size_t i = 0; i < in; ++i) terms.push_back(params.at(wi, o * in + i) * a[i]);
      terms.push_back(params.at(bi, o));
      ad::Var z = ad::sum(terms);
      next.push_back(l + 1 < layer_count() ? ad::tanh(z) : z);
    }
    a = std::move(next);
  }
  return a[0];
}

// ---------------------------------------------------------------------------

JetEvaluator::JetEvaluator(const FcModel& model, int order_x, int order_t)
    : model_(&model), ox_(order_x), ot_(order_t) {
  if (model.input_dim() != 2) throw Error("jet evaluation needs inputs (x, t)");
  if (order_x < 0 || order_x > 2 || order_t < 0 || order_t > 2) throw Error("jet orders must be in 0..2");
  blocks_ = 1 + order_x + order_t;
}

// Block index of a carried derivative, or -1.
int JetEvaluator::block(char which) const {
  int k = 1;
  for (char c : {'x', 't', 'X', 'T'}) {
    const bool carried = c == 'x' ? ox_ >= 1 : c == 't' ? ot_ >= 1 : c == 'X' ? ox_ >= 2 : ot_ >= 2;
    if (!carried) continue;
    if (c == which) return k;
    ++k;
  }
  return -1;
}

void JetEvaluator::weights(const nn::ParameterStore& store, std::size_t l, Matrix& w, Vector& b) const {
  const auto& ws = store.tensor(2 * l).values;
  const auto& bs = store.tensor(2 * l + 1).values;
  const auto out = static_cast<Eigen::Index>(model_->widths()[l + 1]);
  const auto in = static_cast<Eigen::Index>(model_->widths()[l]);
  w = Eigen::Map<const RowMajor>(ws.data(), out, in);
  b = Eigen::Map<const Vector>(bs.data(), out);
}

const Jet& JetEvaluator::forward(const nn::ParameterStore& store, const Vector& x, const Vector& t) {
  if (x.size() != t.size()) throw Error("jet forward: x and t lengths differ");
  const Eigen::Index n = x.size();
  n_ = n;
  const std::size_t layers = model_->layer_count();
  const int bx = block('x'), bt = block('t'), bxx = block('X'), btt = block('T');
  cache_.resize(layers);
  Layer& in = cache_[0];
  in.a = Matrix::Zero(blocks_ * n, 2);
  in.a.block(0, 0, n, 1) = x;
  in.a.block(0, 1, n, 1) = t;
  if (bx > 0) in.a.block(bx * n, 0, n, 1).setOnes();
  if (bt > 0) in.a.block(bt * n, 1, n, 1).setOnes();

  Matrix w;
  Vector b;
  for (std::size_t l = 0; l + 1 < layers; ++l) {
    const Layer& prev = cache_[l];
    Layer& cur = cache_[l + 1];
    weights(store, l, w, b);
    cur.z.noalias() = prev.a * w.transpose();
    cur.z.topRows(n).rowwise() += b.transpose();
    const auto z0 = cur.z.topRows(n).array();
    cur.a.resize(cur.z.rows(), cur.z.cols());
    cur.a.topRows(n) = z0.tanh().matrix();
    const auto s = cur.a.topRows(n).array();
    cur.s1 = (1.0 - s.square()).matrix();
    cur.s2 = (-2.0 * s * cur.s1.array()).matrix();
    if (bxx > 0 || btt > 0) cur.s3 = (-2.0 * (cur.s1.array().square() + s * cur.s2.array())).matrix();
    const auto s1 = cur.s1.array(), s2 = cur.s2.array();
    auto first = [&](int k1, int k2) {
      if (k1 < 0) return;
      const auto zk = cur.z.middleRows(k1 * n, n).array();
      cur.a.middleRows(k1 * n, n) = (s1 * zk).matrix();
      if (k2 > 0) {
        const auto zkk = cur.z.middleRows(k2 * n, n).array();
        cur.a.middleRows(k2 * n, n) = (s2 * zk.square() + s1 * zkk).matrix();
      }
    };
    first(bx, bxx);
    first(bt, btt);
  }
  const Layer& last = cache_[layers - 1];
  weights(store, layers - 1, w, b);
  const Vector u = last.a * w.row(0).transpose();
  auto part = [&](int k) { return k < 0 ? Vector() : Vector(u.segment(k * n, n)); };
  out_.u = u.head(n).array() + b(0);
  out_.ux = part(bx);
  out_.ut = part(bt);
  out_.uxx = part(bxx);
  out_.utt = part(btt);
  return out_;
}

void JetEvaluator::backward(const nn::ParameterStore& store, const Jet& adj, std::span<double> grad) const {
  if (cache_.empty() || n_ == 0) throw Error("jet backward before forward");
  if (grad.size() != store.size()) throw Error("jet backward: gradient buffer size mismatch");
  const std::size_t layers = model_->layer_count();
  const Eigen::Index n = n_;
  const int bx = block('x'), bt = block('t'), bxx = block('X'), btt = block('T');
  // Adjoint of the current layer's stacked outputs.
  Matrix A = Matrix::Zero(blocks_ * n, 1);
  auto put = [&](int k, const Vector& v) {
    if (k >= 0 && v.size() == n) A.middleRows(k * n, n) = v;
  };
  put(0, adj.u);
  put(bx, adj.ux);
  put(bt, adj.ut);
  put(bxx, adj.uxx);
  put(btt, adj.utt);

  Matrix w, Z;
  Vector b;
  for (std::size_t li = layers; li-- > 0;) {
    if (li + 1 == layers) {
      Z = std::move(A);
    } else {
      const Layer& cur = cache_[li + 1];
      const auto s1 = cur.s1.array(), s2 = cur.s2.array();
      Z.resize(A.rows(), A.cols());
      Z.topRows(n) = (A.topRows(n).array() * s1).matrix();
      auto first = [&](int k1, int k2) {
        if (k1 < 0) return;
        const auto zk = cur.z.middleRows(k1 * n, n).array();
        const auto ak = A.middleRows(k1 * n, n).array();
        Z.topRows(n).array() += ak * s2 * zk;
        Z.middleRows(k1 * n, n) = (ak * s1).matrix();
        if (k2 > 0) {
          const auto zkk = cur.z.middleRows(k2 * n, n).array();
          const auto akk = A.middleRows(k2 * n, n).array();
          Z.topRows(n).array() += akk * (cur.s3.array() * zk.square() + s2 * zkk);
          Z.middleRows(k1 * n, n).array() += 2.0 * akk * s2 * zk;
          Z.middleRows(k2 * n, n) = (akk * s1).matrix();
        }
      };
      first(bx, bxx);
      first(bt, btt);
    }
    const Layer& prev = cache_[li];
    const Matrix gw = Z.transpose() * prev.a;
    const Vector gb = Z.topRows(n).colwise().sum().transpose();
    const std::size_t wo = store.offset(2 * li), bo = store.offset(2 * li + 1);
    const auto in = gw.cols();
    for (Eigen::Index o = 0; o < gw.rows(); ++o) {
      for (Eigen::Index i = 0; i < in; ++i) grad[wo + static_cast<std::size_t>(o * in + i)] += gw(o, i);
      grad[bo + static_cast<std::size_t>(o)] += gb(o);
    }
    if (li == 0) break;
    weights(store, li, w, b);
    A.noalias() = Z * w;
  }
}

}  // namespace ginnkan::fc
