// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/bench.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <tuple>

#include "ginnkan/models.hpp"
#include "ginnkan/parallel.hpp"
#include "ginnkan/stats.hpp"

namespace ginnkan::bench {

using nn::Error;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string strip(std::string_view s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

std::vector<CorpusEntry>& corpus_storage() {
  using X = std::span<const double>;
  static std::vector<CorpusEntry> c = {
      {"sin(x1)+x2", 2, false, [](X x) { return std::sin(x[0]) + x[1]; }},
      {"sin(x1)+sin(x2)", 2, false, [](X x) { return std::sin(x[0]) + std::sin(x[1]); }},
      {"x1*x2^2", 2, true, [](X x) { return x[0] * x[1] * x[1]; }},
      {"2*x1+3*x2^2+x1*x2", 2, true, [](X x) { return 2 * x[0] + 3 * x[1] * x[1] + x[0] * x[1]; }},
      {"sin(x1*x2)", 2, false, [](X x) { return std::sin(x[0] * x[1]); }},
      {"sin(x1*x2)+x1", 2, false, [](X x) { return std::sin(x[0] * x[1]) + x[0]; }},
      {"x1*x2^2+sin(x1)", 2, false, [](X x) { return x[0] * x[1] * x[1] + std::sin(x[0]); }},
      {"ln(x1*x2+x1)", 2, false, [](X x) { return std::log(x[0] * x[1] + x[0]); }},
  };
  return c;
}

std::uint64_t dataset_seed(std::uint64_t seed) { return seed ^ 0x5DEECE66Dull; }

std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string csv_status(const std::string& failure) {
  if (failure.empty()) return "ok";
  std::string s = failure;
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ';';
  return s;
}

double parse_real(const std::string& s, std::size_t line) {
  if (s == "NA") return 0.0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw Error("results line " + std::to_string(line) + ": bad number '" + s + "'");
  return v;
}

std::uint64_t parse_seed(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("results line " + std::to_string(line) + ": bad seed '" + s + "'");
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string num(double v, int digits = 4) { return nn::format_number(v, digits); }

// Piecewise-linear viridis approximation.
std::string color(double t) {
  static const double stops[][3] = {
      {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
  if (!std::isfinite(t)) t = 1.0;
  t = std::clamp(t, 0.0, 1.0) * 4.0;
  const int i = std::min(3, static_cast<int>(t));
  const double f = t - i;
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

}  // namespace

const std::vector<CorpusEntry>& corpus() { return corpus_storage(); }

void register_equation(CorpusEntry entry) {
  if (entry.id.empty() || !entry.f || entry.features == 0) throw Error("corpus entry needs an id, a function and features");
  if (!(entry.hi > entry.lo)) throw Error("corpus entry '" + entry.id + "': empty sampling range");
  entry.id = strip(entry.id);
  auto& c = corpus_storage();
  for (auto& e : c) {
    if (e.id == entry.id) {
      e = std::move(entry);
      return;
    }
  }
  c.push_back(std::move(entry));
}

const CorpusEntry& equation(std::string_view id) {
  const std::string key = strip(id);
  for (const auto& e : corpus())
    if (e.id == key) return e;
  std::string known;
  for (const auto& e : corpus()) known += (known.empty() ? "" : ", ") + e.id;
  throw Error("unknown equation '" + std::string(id) + "'; corpus: " + known);
}

nn::Matrix SrDataset::rows(const std::vector<std::size_t>& idx) const {
  nn::Matrix m(static_cast<Eigen::Index>(idx.size()), inputs.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) m.row(static_cast<Eigen::Index>(r)) = inputs.row(static_cast<Eigen::Index>(idx[r]));
  return m;
}

nn::Vector SrDataset::values(const std::vector<std::size_t>& idx) const {
  nn::Vector v(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t r = 0; r < idx.size(); ++r) v(static_cast<Eigen::Index>(r)) = targets(static_cast<Eigen::Index>(idx[r]));
  return v;
}

SrDataset generate_dataset(std::string_view id, std::size_t n, std::uint64_t seed) {
  const CorpusEntry& e = equation(id);
  if (n == 0) throw Error("generate_dataset: n must be positive");
  SrDataset d;
  d.name = e.id;
  d.lp = e.lp;
  const auto rows = static_cast<Eigen::Index>(n);
  const auto cols = static_cast<Eigen::Index>(e.features);
  d.inputs.resize(rows, cols);
  d.targets.resize(rows);
  std::mt19937_64 rng(dataset_seed(seed));
  std::uniform_real_distribution<double> u(e.lo, e.hi);
  std::vector<double> x(e.features);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) x[static_cast<std::size_t>(c)] = d.inputs(r, c) = u(rng);
    d.targets(r) = e.f(x);
    if (!std::isfinite(d.targets(r))) throw Error("equation '" + e.id + "' is not finite on its sampling range");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_train = n == 1 ? 1 : (3 * n) / 4;
  d.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  d.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  if (d.test.empty()) d.test = d.train;
  std::sort(d.train.begin(), d.train.end());
  std::sort(d.test.begin(), d.test.end());
  return d;
}

FitResult fit(const SrDataset& data, std::string_view kind, const nn::TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  FitResult r;
  r.model = make_model(kind, static_cast<std::size_t>(data.inputs.cols()), config.seed);
  const nn::Matrix xtr = data.rows(data.train);
  const nn::Vector ytr = data.values(data.train);
  r.loss_history = nn::train_supervised(*r.model, xtr, ytr, config).loss_history;
  const nn::Matrix xte = data.rows(data.test);
  const nn::Vector yte = data.values(data.test);
  const std::vector<double> pred = r.model->predict(xte);
  const std::span<const double> target(yte.data(), static_cast<std::size_t>(yte.size()));
  r.test_mse = nn::mse(pred, target);
  r.test_r2 = nn::r_squared(pred, target);
  if (!std::isfinite(r.test_mse)) throw Error("test predictions are not finite");
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

std::vector<ToyCell> run_toy_study(const std::vector<std::string>& datasets, const std::vector<std::string>& models,
                                   const std::vector<std::uint64_t>& seeds, const nn::TrainConfig& config,
                                   std::size_t jobs) {
  std::vector<ToyCell> cells;
  for (const auto& d : datasets) {
    const std::string id = equation(d).id;
    for (const auto& m : models) {
      make_model(m, 1);  // rejects unknown kinds up front
      for (std::uint64_t s : seeds) {
        ToyCell c;
        c.dataset = id;
        c.model = m;
        c.seed = s;
        cells.push_back(std::move(c));
      }
    }
  }
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    ToyCell& c = cells[i];
    nn::TrainConfig cfg = config;
    cfg.seed = c.seed;
    try {
      const SrDataset data = generate_dataset(c.dataset, 2000, c.seed);
      const FitResult r = fit(data, c.model, cfg);
      c.mse = r.test_mse;
      c.r2 = r.test_r2;
      c.seconds = r.seconds;
    } catch (const std::exception& e) {
      c.mse = kInf;
      c.r2 = -kInf;
      c.failure = e.what();
    }
  });
  return cells;
}

BenchReport aggregate(const std::vector<ToyCell>& cells, const std::vector<std::string>& model_order) {
  BenchReport rep;
  rep.models = model_order;
  for (const auto& c : cells)
    if (std::find(rep.models.begin(), rep.models.end(), c.model) == rep.models.end()) rep.models.push_back(c.model);
  std::vector<std::string> unknown;
  for (const auto& e : corpus()) {
    for (const auto& c : cells) {
      if (c.dataset == e.id) {
        rep.datasets.push_back(e.id);
        rep.lp.push_back(e.lp);
        break;
      }
    }
  }
  for (const auto& c : cells) {
    if (std::find(rep.datasets.begin(), rep.datasets.end(), c.dataset) == rep.datasets.end()) {
      rep.datasets.push_back(c.dataset);
      rep.lp.push_back(false);
    }
  }
  const std::size_t D = rep.datasets.size(), M = rep.models.size();
  rep.median_mse.assign(D, std::vector<double>(M, kInf));
  rep.median_r2.assign(D, std::vector<double>(M, -kInf));
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& c : cells) {
    auto& g = groups[{c.dataset, c.model}];
    g.first.push_back(c.failure.empty() ? c.mse : kInf);
    g.second.push_back(c.failure.empty() && std::isfinite(c.r2) ? c.r2 : -kInf);
  }
  rep.r2_pct.assign(M, 0.0);
  rep.mean_rank_lp.assign(M, 0.0);
  rep.mean_rank_non_lp.assign(M, 0.0);
  rep.mean_rank_all.assign(M, 0.0);
  std::size_t n_lp = 0, n_non = 0;
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t m = 0; m < M; ++m) {
      auto it = groups.find({rep.datasets[d], rep.models[m]});
      if (it == groups.end()) continue;
      rep.median_mse[d][m] = stats::median(it->second.first);
      std::vector<double> neg;
      for (double r : it->second.second) neg.push_back(-r);
      rep.median_r2[d][m] = -stats::median(neg);
      if (rep.median_r2[d][m] > 0.99) rep.r2_pct[m] += 1.0;
    }
    const auto ranks = stats::average_ranks(rep.median_mse[d]);
    rep.winner.push_back(static_cast<std::size_t>(std::min_element(ranks.begin(), ranks.end()) - ranks.begin()));
    (rep.lp[d] ? n_lp : n_non) += 1;
    for (std::size_t m = 0; m < M; ++m) {
      (rep.lp[d] ? rep.mean_rank_lp : rep.mean_rank_non_lp)[m] += ranks[m];
      rep.mean_rank_all[m] += ranks[m];
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t m = 0; m < M; ++m) {
    rep.r2_pct[m] = D ? 100.0 * rep.r2_pct[m] / static_cast<double>(D) : 0.0;
    rep.mean_rank_lp[m] = n_lp ? rep.mean_rank_lp[m] / static_cast<double>(n_lp) : nan;
    rep.mean_rank_non_lp[m] = n_non ? rep.mean_rank_non_lp[m] / static_cast<double>(n_non) : nan;
    rep.mean_rank_all[m] = D ? rep.mean_rank_all[m] / static_cast<double>(D) : nan;
  }
  return rep;
}

void write_pde_csv(std::ostream& os, const std::vector<pinn::SuiteCell>& cells, bool timing) {
  std::vector<const pinn::SuiteCell*> sorted;
  for (const auto& c : cells) sorted.push_back(&c);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    return std::tie(a->pde, a->model, a->seed) < std::tie(b->pde, b->model, b->seed);
  });
  os << "pde,model,seed,mse,heldout_mse,wall_time,status\n";
  for (const auto* c : sorted) {
    os << c->pde << ',' << c->model << ',' << c->seed << ',' << format_real(c->mse) << ','
       << format_real(c->heldout_mse) << ',' << (timing ? format_real(c->seconds) : "NA") << ','
       << csv_status(c->failure) << '\n';
  }
}

void write_toy_csv(std::ostream& os, const std::vector<ToyCell>& cells, bool timing) {
  std::vector<const ToyCell*> sorted;
  for (const auto& c : cells) sorted.push_back(&c);
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto* a, const auto* b) {
    return std::tie(a->dataset, a->model, a->seed) < std::tie(b->dataset, b->model, b->seed);
  });
  os << "dataset,model,seed,mse,r2,wall_time,status\n";
  for (const auto* c : sorted) {
    os << c->dataset << ',' << c->model << ',' << c->seed << ',' << format_real(c->mse) << ','
       << format_real(c->r2) << ',' << (timing ? format_real(c->seconds) : "NA") << ',' << csv_status(c->failure)
       << '\n';
  }
}

ResultsFile read_results(std::istream& is) {
  ResultsFile out;
  std::string line;
  if (!std::getline(is, line)) throw Error("results file is empty");
  const auto header = split_csv(line);
  if (header == std::vector<std::string>{"pde", "model", "seed", "mse", "heldout_mse", "wall_time", "status"}) {
    out.kind = ResultsFile::Kind::pde;
  } else if (header == std::vector<std::string>{"dataset", "model", "seed", "mse", "r2", "wall_time", "status"}) {
    out.kind = ResultsFile::Kind::toy;
  } else {
    throw Error("unrecognized results header: " + line);
  }
  for (std::size_t n = 2; std::getline(is, line); ++n) {
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv(line);
    if (f.size() != 7) throw Error("results line " + std::to_string(n) + ": expected 7 fields");
    const std::string failure = f[6] == "ok" ? "" : f[6];
    if (out.kind == ResultsFile::Kind::pde) {
      pinn::SuiteCell c;
      c.pde = f[0];
      c.model = f[1];
      c.seed = parse_seed(f[2], n);
      c.mse = parse_real(f[3], n);
      c.heldout_mse = parse_real(f[4], n);
      c.seconds = parse_real(f[5], n);
      c.failure = failure;
      out.pde.push_back(std::move(c));
    } else {
      ToyCell c;
      c.dataset = f[0];
      c.model = f[1];
      c.seed = parse_seed(f[2], n);
      c.mse = parse_real(f[3], n);
      c.r2 = parse_real(f[4], n);
      c.seconds = parse_real(f[5], n);
      c.failure = failure;
      out.toy.push_back(std::move(c));
    }
  }
  return out;
}

std::string r2_bar_chart(const BenchReport& report) {
  const std::size_t M = report.models.size();
  const int bar = 60, gap = 30, left = 60, top = 40, height = 240;
  const int width = left + static_cast<int>(M) * (bar + gap) + gap;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + height + 50
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">datasets with R^2 &gt; 0.99 (%)</text>\n";
  for (int p = 0; p <= 100; p += 25) {
    const int y = top + height - p * height / 100;
    s << "<line x1=\"" << left << "\" y1=\"" << y << "\" x2=\"" << width - 10 << "\" y2=\"" << y
      << "\" stroke=\"#ddd\"/>\n";
    s << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << p << "</text>\n";
  }
  for (std::size_t m = 0; m < M; ++m) {
    const double pct = std::clamp(report.r2_pct[m], 0.0, 100.0);
    const int h = static_cast<int>(std::lround(pct * height / 100.0));
    const int x = left + gap + static_cast<int>(m) * (bar + gap);
    s << "<rect x=\"" << x << "\" y=\"" << top + height - h << "\" width=\"" << bar << "\" height=\"" << h
      << "\" fill=\"" << color(M > 1 ? static_cast<double>(m) / static_cast<double>(M - 1) * 0.8 : 0.4) << "\"/>\n";
    s << "<text x=\"" << x + bar / 2 << "\" y=\"" << top + height - h - 4 << "\" text-anchor=\"middle\">"
      << num(pct, 3) << "</text>\n";
    s << "<text x=\"" << x + bar / 2 << "\" y=\"" << top + height + 18 << "\" text-anchor=\"middle\">"
      << report.models[m] << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

HeatmapData heatmap_data(const pinn::PdeProblem& p, const nn::Model& model, std::size_t resolution) {
  if (resolution < 2) throw Error("heatmap resolution must be at least 2");
  if (model.input_dim() != 2) throw Error("heatmap needs a model over (x, t)");
  HeatmapData h;
  h.resolution = resolution;
  const std::size_t n = resolution * resolution;
  nn::Matrix pts(static_cast<Eigen::Index>(n), 2);
  for (std::size_t r = 0; r < resolution; ++r) {
    for (std::size_t c = 0; c < resolution; ++c) {
      const double x = p.x_lo + (p.x_hi - p.x_lo) * static_cast<double>(c) / static_cast<double>(resolution - 1);
      const double t = p.t_hi * static_cast<double>(r) / static_cast<double>(resolution - 1);
      const auto i = static_cast<Eigen::Index>(r * resolution + c);
      pts(i, 0) = x;
      pts(i, 1) = t;
    }
  }
  h.prediction = model.predict(pts);
  h.exact.resize(n);
  h.error.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    h.exact[i] = p.solution(pts(k, 0), pts(k, 1));
    h.error[i] = std::abs(h.prediction[i] - h.exact[i]);
  }
  return h;
}

std::string solution_heatmap(const pinn::PdeProblem& p, const nn::Model& model, std::size_t resolution) {
  const HeatmapData h = heatmap_data(p, model, resolution);
  const int cell = std::max(2, static_cast<int>(240 / resolution));
  const int side = cell * static_cast<int>(resolution);
  const int pad = 40, top = 50;
  const int width = 3 * side + 4 * pad;
  auto range = [](const std::vector<double>& v) {
    const auto [a, b] = std::minmax_element(v.begin(), v.end());
    return std::pair<double, double>{*a, *b};
  };
  // Prediction and solution share one color scale.
  auto [lo1, hi1] = range(h.exact);
  const auto [plo, phi] = range(h.prediction);
  lo1 = std::min(lo1, plo);
  hi1 = std::max(hi1, phi);
  const auto [elo, ehi] = range(h.error);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << top + side + 50
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << p.name << ", "
    << model.kind() << "</text>\n";
  const std::vector<double>* panels[] = {&h.prediction, &h.exact, &h.error};
  const char* titles[] = {"prediction", "analytical", "absolute error"};
  for (int k = 0; k < 3; ++k) {
    const int x0 = pad + k * (side + pad);
    const double lo = k == 2 ? elo : lo1, hi = k == 2 ? ehi : hi1;
    const double span = hi > lo ? hi - lo : 1.0;
    s << "<text x=\"" << x0 + side / 2 << "\" y=\"" << top - 8 << "\" text-anchor=\"middle\">" << titles[k]
      << "</text>\n";
    for (std::size_t r = 0; r < resolution; ++r) {
      for (std::size_t c = 0; c < resolution; ++c) {
        const double v = (*panels[k])[r * resolution + c];
        // t grows upwards
        const int y = top + static_cast<int>(resolution - 1 - r) * cell;
        s << "<rect x=\"" << x0 + static_cast<int>(c) * cell << "\" y=\"" << y << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << color((v - lo) / span) << "\"/>\n";
      }
    }
    s << "<text x=\"" << x0 << "\" y=\"" << top + side + 16 << "\">min " << num(lo) << "</text>\n";
    s << "<text x=\"" << x0 + side << "\" y=\"" << top + side + 16 << "\" text-anchor=\"end\">max " << num(hi)
      << "</text>\n";
  }
  s << "<text x=\"" << width / 2 << "\" y=\"" << top + side + 36 << "\" text-anchor=\"middle\">x from "
    << num(p.x_lo) << " to " << num(p.x_hi) << ", t from 0 to " << num(p.t_hi) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace ginnkan::bench
