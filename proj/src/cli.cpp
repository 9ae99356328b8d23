// SPDX-License-Identifier: Apache-2.0
#include "ginnkan/cli.hpp"

#include <CLI11.hpp>
#include <toml.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>

#include "ginnkan/bench.hpp"
#include "ginnkan/ginn.hpp"
#include "ginnkan/ginnkan.hpp"
#include "ginnkan/gradcheck.hpp"
#include "ginnkan/kan.hpp"
#include "ginnkan/models.hpp"
#include "ginnkan/pinn.hpp"

namespace ginnkan::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kPdeModels = {"ginn-kan", "ginn", "kan", "fc"};

struct Options {
  std::size_t steps = 0;
  double lr = 0.0;
  std::uint64_t seed = 0;
  std::string out_dir = "results";
  std::string config;
  std::size_t jobs = 1;
  std::size_t points = 2500;
  bool timing = false;

  // per subcommand
  std::vector<std::string> datasets, models;
  std::vector<std::uint64_t> seeds;
  std::string target;  // pde id, equation, checkpoint or csv path
  std::string model;
  std::string output;
  bool json = false;
  std::size_t oracle_points = 20;
};

std::string slug(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-';
    if (keep) out += c;
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "x" : out;
}

std::string num(double v, int digits = 3) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*e", digits - 1, v);
  return buf;
}

std::string fixed(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s + " " : s + std::string(w - s.size(), ' '); }

std::vector<std::string> split_list(const std::vector<std::string>& in) {
  std::vector<std::string> out;
  for (const auto& s : in) {
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, ',');)
      if (!item.empty()) out.push_back(item);
  }
  return out;
}

// -- config file ---------------------------------------------------------------

template <class T>
T toml_get(const toml::node& n, const std::string& key) {
  if constexpr (std::is_floating_point_v<T>) {
    if (auto v = n.value<double>()) return *v;
  } else if constexpr (std::is_integral_v<T>) {
    if (auto v = n.value<std::int64_t>(); v && *v >= 0) return static_cast<T>(*v);
  } else {
    if (auto v = n.value<std::string>()) return *v;
  }
  throw UsageError("config: bad value for '" + key + "'");
}

template <class T>
std::vector<T> toml_list(const toml::node& n, const std::string& key) {
  const toml::array* arr = n.as_array();
  if (!arr) return {toml_get<T>(n, key)};
  std::vector<T> out;
  for (const auto& e : *arr) out.push_back(toml_get<T>(e, key));
  return out;
}

struct FileConfig {
  std::map<std::string, double> train_reals;
  std::map<std::string, std::size_t> train_ints;
  std::vector<std::string> pdes, pde_models, datasets, toy_models;
  std::vector<std::uint64_t> pde_seeds, toy_seeds;
  std::optional<std::size_t> jobs, points;
  std::optional<std::string> out_dir;
};

FileConfig load_config(const std::string& path) {
  toml::table t;
  try {
    t = toml::parse_file(path);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "config " << path << ": " << e.description() << " (line " << e.source().begin.line << ")";
    throw UsageError(msg.str());
  }
  FileConfig c;
  static const std::set<std::string> reals = {"lr", "growth_threshold", "ic_weight", "bc_weight"};
  static const std::set<std::string> ints = {"steps", "max_steps", "seed", "growth_patience", "grid_update_interval"};
  for (const auto& [k, v] : t) {
    const std::string key(k.str());
    if (key == "jobs") {
      c.jobs = toml_get<std::size_t>(v, key);
    } else if (key == "out_dir") {
      c.out_dir = toml_get<std::string>(v, key);
    } else if (key == "train" && v.is_table()) {
      for (const auto& [k2, v2] : *v.as_table()) {
        const std::string name(k2.str());
        if (reals.count(name)) c.train_reals[name] = toml_get<double>(v2, name);
        else if (ints.count(name)) c.train_ints[name == "max_steps" ? "steps" : name] = toml_get<std::size_t>(v2, name);
        else throw UsageError("config: unknown key train." + name);
      }
    } else if (key == "pde" && v.is_table()) {
      for (const auto& [k2, v2] : *v.as_table()) {
        const std::string name(k2.str());
        if (name == "pdes") c.pdes = toml_list<std::string>(v2, name);
        else if (name == "models") c.pde_models = toml_list<std::string>(v2, name);
        else if (name == "seeds") c.pde_seeds = toml_list<std::uint64_t>(v2, name);
        else if (name == "points") c.points = toml_get<std::size_t>(v2, name);
        else throw UsageError("config: unknown key pde." + name);
      }
    } else if (key == "toy" && v.is_table()) {
      for (const auto& [k2, v2] : *v.as_table()) {
        const std::string name(k2.str());
        if (name == "datasets") c.datasets = toml_list<std::string>(v2, name);
        else if (name == "models") c.toy_models = toml_list<std::string>(v2, name);
        else if (name == "seeds") c.toy_seeds = toml_list<std::uint64_t>(v2, name);
        else throw UsageError("config: unknown key toy." + name);
      }
    } else {
      throw UsageError("config: unknown key " + key);
    }
  }
  return c;
}

// Library default, then the config file, then flags.
nn::TrainConfig train_config(nn::TrainConfig base, const FileConfig& fc, const Options& o, const CLI::App& app) {
  for (const auto& [k, v] : fc.train_reals) {
    if (k == "lr") base.lr = v;
    else if (k == "growth_threshold") base.growth_threshold = v;
    else if (k == "ic_weight") base.ic_weight = v;
    else if (k == "bc_weight") base.bc_weight = v;
  }
  for (const auto& [k, v] : fc.train_ints) {
    if (k == "steps") base.max_steps = v;
    else if (k == "seed") base.seed = v;
    else if (k == "growth_patience") base.growth_patience = v;
    else if (k == "grid_update_interval") base.grid_update_interval = v;
  }
  if (app.count("--steps")) base.max_steps = o.steps;
  if (app.count("--lr")) base.lr = o.lr;
  if (app.count("--seed")) base.seed = o.seed;
  try {
    base.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return base;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw nn::Error("cannot write " + path.string());
  f << text;
  if (!f) throw nn::Error("cannot write " + path.string());
}

// -- tables --------------------------------------------------------------------

void print_toy(std::ostream& out, const bench::BenchReport& r) {
  std::size_t w = 10;
  for (const auto& d : r.datasets) w = std::max(w, d.size() + 2);
  out << pad("equation", w) << pad("LP", 4);
  for (const auto& m : r.models) out << pad(m, 12);
  out << "\n";
  for (std::size_t d = 0; d < r.datasets.size(); ++d) {
    out << pad(r.datasets[d], w) << pad(r.lp[d] ? "yes" : "no", 4);
    for (std::size_t m = 0; m < r.models.size(); ++m)
      out << pad(num(r.median_mse[d][m]) + (r.winner[d] == m ? "*" : ""), 12);
    out << "\n";
  }
  const std::size_t lw = std::max<std::size_t>(w + 4, 18);
  out << "\n" << pad("", lw);
  for (const auto& m : r.models) out << pad(m, 12);
  out << "\n" << pad("R^2 > 0.99 (%)", lw);
  for (double p : r.r2_pct) out << pad(fixed(p), 12);
  out << "\n" << pad("mean rank LP", lw);
  for (double v : r.mean_rank_lp) out << pad(fixed(v), 12);
  out << "\n" << pad("mean rank non-LP", lw);
  for (double v : r.mean_rank_non_lp) out << pad(fixed(v), 12);
  out << "\n" << pad("mean rank all", lw);
  for (double v : r.mean_rank_all) out << pad(fixed(v), 12);
  out << "\n";
}

void print_pde(std::ostream& out, const pinn::SuiteSummary& s) {
  const std::size_t w = 18;
  out << pad("pde", w);
  for (const auto& m : s.models) out << pad(m, 12);
  out << "\n";
  for (std::size_t p = 0; p < s.pdes.size(); ++p) {
    out << pad(s.pdes[p], w);
    for (std::size_t m = 0; m < s.models.size(); ++m) out << pad(num(s.median[p][m]), 12);
    out << "\n";
  }
  out << pad("mean rank", w);
  for (double v : s.mean_rank) out << pad(fixed(v), 12);
  out << "\n" << pad("mean rank non-LP", w);
  for (double v : s.mean_rank_non_lp) out << pad(fixed(v), 12);
  out << "\n";
}

std::string checkpoint_name(const std::string& pde, const std::string& model, std::uint64_t seed) {
  return pde + "_" + model + "_seed" + std::to_string(seed) + ".json";
}

// -- subcommands ---------------------------------------------------------------

int cmd_toy(const Options& o, const FileConfig& fc, const CLI::App& app, std::ostream& out, std::ostream& err) {
  const nn::TrainConfig cfg = train_config(nn::TrainConfig{}, fc, o, app);
  std::vector<std::string> datasets = split_list(o.datasets);
  if (datasets.empty()) datasets = fc.datasets;
  if (datasets.empty())
    for (const auto& e : bench::corpus()) datasets.push_back(e.id);
  std::vector<std::string> models = split_list(o.models);
  if (models.empty()) models = fc.toy_models;
  if (models.empty()) models = bench::kToyModels;
  std::vector<std::uint64_t> seeds = o.seeds;
  if (seeds.empty()) seeds = fc.toy_seeds;
  if (seeds.empty()) seeds = {0, 1, 2, 3, 4};
  for (const auto& d : datasets) {
    try {
      bench::equation(d);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  for (const auto& m : models)
    if (std::find(model_kinds().begin(), model_kinds().end(), m) == model_kinds().end())
      throw UsageError("unknown model kind '" + m + "'");

  const auto cells = bench::run_toy_study(datasets, models, seeds, cfg, o.jobs);
  const fs::path dir(o.out_dir);
  std::ostringstream csv;
  bench::write_toy_csv(csv, cells, o.timing);
  write_file(dir / "toy_results.csv", csv.str());
  const auto report = bench::aggregate(cells, models);
  write_file(dir / "r2_bar.svg", bench::r2_bar_chart(report));
  print_toy(out, report);
  out << "\nwrote " << (dir / "toy_results.csv").string() << " and " << (dir / "r2_bar.svg").string() << "\n";
  int code = kOk;
  for (const auto& c : cells) {
    if (!c.failure.empty()) {
      err << "run failed: " << c.dataset << " " << c.model << " seed " << c.seed << ": " << c.failure << "\n";
      code = kRunFailure;
    }
  }
  return code;
}

int cmd_pde(const Options& o, const FileConfig& fc, const CLI::App& app, std::ostream& out, std::ostream& err) {
  const nn::TrainConfig cfg = train_config(pinn::default_config(), fc, o, app);
  std::vector<std::string> pdes;
  std::string target = o.target.empty() && !fc.pdes.empty() ? "" : o.target;
  if (target.empty()) pdes = fc.pdes;
  else if (target == "all")
    for (const auto& p : pinn::registry()) pdes.push_back(p.id);
  else
    pdes = split_list({target});
  if (pdes.empty()) throw UsageError("pde: give a problem id or 'all'");
  for (auto& p : pdes) {
    try {
      p = pinn::problem(p).id;
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  std::vector<std::string> models = split_list({o.model});
  if (models.empty()) models = fc.pde_models;
  if (models.size() == 1 && models[0] == "all") models = kPdeModels;
  if (models.empty()) throw UsageError("pde: --model is required");
  for (const auto& m : models)
    if (std::find(model_kinds().begin(), model_kinds().end(), m) == model_kinds().end())
      throw UsageError("unknown model kind '" + m + "'");
  std::vector<std::uint64_t> seeds = o.seeds;
  if (seeds.empty()) seeds = fc.pde_seeds;
  if (seeds.empty()) seeds = {cfg.seed};
  const std::size_t points = app.get_subcommand("pde")->count("--points") ? o.points : fc.points.value_or(o.points);
  const std::uint64_t first_seed = *std::min_element(seeds.begin(), seeds.end());

  const fs::path dir(o.out_dir);
  fs::create_directories(dir / "checkpoints");
  std::mutex io;
  std::vector<std::string> write_errors;
  auto on_result = [&](const pinn::SuiteCell& cell, const pinn::SolveResult& r) {
    try {
      save_checkpoint((dir / "checkpoints" / checkpoint_name(cell.pde, cell.model, cell.seed)).string(), *r.model,
                      cell.seed);
      if (cell.seed == first_seed)
        write_file(dir / ("heatmap_" + cell.pde + "_" + cell.model + ".svg"),
                   bench::solution_heatmap(pinn::problem(cell.pde), *r.model));
    } catch (const std::exception& e) {
      std::lock_guard lock(io);
      write_errors.push_back(e.what());
    }
  };
  const auto cells = pinn::run_suite(pdes, models, seeds, cfg, o.jobs, points, on_result);
  std::ostringstream csv;
  bench::write_pde_csv(csv, cells, o.timing);
  write_file(dir / "pde_results.csv", csv.str());
  print_pde(out, pinn::summarize(cells, models));
  out << "\nwrote " << (dir / "pde_results.csv").string() << "\n";
  int code = kOk;
  for (const auto& c : cells) {
    if (!c.failure.empty()) {
      err << "run failed: " << c.pde << " " << c.model << " seed " << c.seed << ": " << c.failure << "\n";
      code = kRunFailure;
    }
  }
  for (const auto& e : write_errors) {
    err << e << "\n";
    code = kRunFailure;
  }
  return code;
}

std::string equation_of(const nn::Model& m, bool json) {
  if (const auto* g = dynamic_cast<const ginn::GinnModel*>(&m)) return ginn::extract_equation(g->snapshot());
  if (const auto* k = dynamic_cast<const kan::KanModel*>(&m)) return k->extract();
  if (const auto* gk = dynamic_cast<const ginnkan_model::GinnKanModel*>(&m)) {
    const auto ex = gk->extract();
    return json ? ex.report().dump(2) : ex.expression;
  }
  throw nn::Error("a " + m.kind() + " model has no symbolic form");
}

int cmd_fit(const Options& o, const FileConfig& fc, const CLI::App& app, std::ostream& out) {
  const nn::TrainConfig cfg = train_config(nn::TrainConfig{}, fc, o, app);
  bench::SrDataset data;
  try {
    data = bench::generate_dataset(o.target, 2000, cfg.seed);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (std::find(model_kinds().begin(), model_kinds().end(), o.model) == model_kinds().end())
    throw UsageError("unknown model kind '" + o.model + "'");
  const bench::FitResult r = bench::fit(data, o.model, cfg);
  const fs::path path = o.output.empty()
                            ? fs::path(o.out_dir) / (o.model + "_" + slug(data.name) + "_seed" + std::to_string(cfg.seed) + ".json")
                            : fs::path(o.output);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_checkpoint(path.string(), *r.model, cfg.seed);
  out << "equation  " << data.name << "\nmodel     " << o.model << "\ntest mse  " << num(r.test_mse, 4)
      << "\ntest r2   " << nn::format_number(r.test_r2, 6) << "\n";
  if (o.model != "fc") out << "extracted " << equation_of(*r.model, false) << "\n";
  out << "wrote " << path.string() << "\n";
  return kOk;
}

int cmd_extract(const Options& o, std::ostream& out) {
  const auto model = load_checkpoint(o.target);
  out << equation_of(*model, o.json) << "\n";
  return kOk;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  const auto results = ad::gradient_oracles(o.seed, o.oracle_points);
  int code = kOk;
  out << pad("primitive", 10) << pad("nesting", 9) << pad("max error", 12) << pad("tolerance", 11) << "result\n";
  for (const auto& r : results) {
    out << pad(r.name, 10) << pad(std::to_string(r.nesting), 9) << pad(num(r.max_error), 12)
        << pad(num(r.tolerance, 1), 11) << (r.passed ? "ok" : "FAIL") << "\n";
    if (!r.passed) code = kRunFailure;
  }
  return code;
}

int cmd_report(const Options& o, std::ostream& out, std::ostream& err) {
  std::ifstream f(o.target);
  if (!f) throw nn::Error("cannot read " + o.target);
  const bench::ResultsFile rf = bench::read_results(f);
  const fs::path dir(o.out_dir);
  if (rf.kind == bench::ResultsFile::Kind::toy) {
    if (rf.toy.empty()) {
      err << "warning: " << o.target << " has no results; no plots written\n";
      return kOk;
    }
    std::vector<std::string> order;
    for (const auto& m : bench::kToyModels)
      for (const auto& c : rf.toy)
        if (c.model == m) {
          order.push_back(m);
          break;
        }
    const auto rep = bench::aggregate(rf.toy, order);
    print_toy(out, rep);
    write_file(dir / "r2_bar.svg", bench::r2_bar_chart(rep));
    out << "\nwrote " << (dir / "r2_bar.svg").string() << "\n";
    return kOk;
  }
  if (rf.pde.empty()) {
    err << "warning: " << o.target << " has no results; no plots written\n";
    return kOk;
  }
  std::vector<std::string> order;
  for (const auto& m : kPdeModels)
    for (const auto& c : rf.pde)
      if (c.model == m) {
        order.push_back(m);
        break;
      }
  print_pde(out, pinn::summarize(rf.pde, order));
  // Heatmaps come from checkpoints saved next to the results.
  const fs::path ckpt = fs::path(o.target).parent_path() / "checkpoints";
  std::map<std::pair<std::string, std::string>, std::uint64_t> first;
  for (const auto& c : rf.pde) {
    if (!c.failure.empty()) continue;
    auto key = std::make_pair(c.pde, c.model);
    auto it = first.find(key);
    if (it == first.end() || c.seed < it->second) first[key] = c.seed;
  }
  std::size_t written = 0;
  for (const auto& [key, seed] : first) {
    const fs::path p = ckpt / checkpoint_name(key.first, key.second, seed);
    if (!fs::exists(p)) continue;
    const auto model = load_checkpoint(p.string());
    write_file(dir / ("heatmap_" + key.first + "_" + key.second + ".svg"),
               bench::solution_heatmap(pinn::problem(key.first), *model));
    ++written;
  }
  if (written == 0) err << "warning: no checkpoints found in " << ckpt.string() << "; no heatmaps written\n";
  else out << "\nwrote " << written << " heatmap(s) to " << dir.string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interpretable networks (GINN, KAN, GINN-KAN) for regression and physics-informed PDE solving"};
  app.name("ginnkan");
  app.require_subcommand(1);
  Options o;
  app.add_option("--steps", o.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  app.add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app.add_option("--seed", o.seed, "Seed");
  app.add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
  app.add_option("--config", o.config, "TOML configuration file");
  app.add_option("--jobs", o.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--timing", o.timing, "Record wall times in results (makes files run-dependent)");
  app.fallthrough();

  auto* toy = app.add_subcommand("toy", "Toy regression study over the equation corpus");
  toy->add_option("--datasets", o.datasets, "Equations (default: whole corpus)");
  toy->add_option("--models", o.models, "Model kinds")->delimiter(',');
  toy->add_option("--seeds", o.seeds, "Seeds")->delimiter(',');

  auto* pde = app.add_subcommand("pde", "PINN suite");
  pde->add_option("id", o.target, "Problem id, comma list or 'all'");
  pde->add_option("--model", o.model, "Model kind, comma list or 'all'");
  pde->add_option("--seeds", o.seeds, "Seeds")->delimiter(',');
  pde->add_option("--points", o.points, "Interior collocation points")->check(CLI::PositiveNumber);

  auto* fit = app.add_subcommand("fit", "Train a model on one corpus equation and save a checkpoint");
  fit->add_option("equation", o.target, "Corpus equation")->required();
  fit->add_option("--model", o.model, "Model kind")->required();
  fit->add_option("-o,--output", o.output, "Checkpoint path");

  auto* extract = app.add_subcommand("extract", "Print the equation of a checkpoint");
  extract->add_option("checkpoint", o.target, "Checkpoint file")->required();
  extract->add_flag("--json", o.json, "Structured per-edge report (GINN-KAN)");

  auto* grad = app.add_subcommand("gradcheck", "Autodiff finite-difference oracle suite");
  grad->add_option("--points", o.oracle_points, "Random points per check")->check(CLI::PositiveNumber);

  auto* report = app.add_subcommand("report", "Tables and plots from a results CSV");
  report->add_option("results", o.target, "Results CSV")->required();

  static const std::set<std::string> valued = {"--steps", "--lr", "--seed", "--out-dir", "--config", "--jobs"};
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (valued.count(a)) {
      ++i;
      continue;
    }
    if (a.empty() || a[0] == '-') continue;
    if (!app.get_subcommand_no_throw(a)) {
      err << "error: unknown subcommand '" << a << "'\n\n" << app.help();
      return kUsage;
    }
    break;
  }
  std::vector<const char*> argv{"ginnkan"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    FileConfig fc;
    if (!o.config.empty()) fc = load_config(o.config);
    if (!app.count("--jobs") && fc.jobs) o.jobs = *fc.jobs;
    if (!app.count("--out-dir") && fc.out_dir) o.out_dir = *fc.out_dir;
    if (*toy) return cmd_toy(o, fc, app, out, err);
    if (*pde) return cmd_pde(o, fc, app, out, err);
    if (*fit) return cmd_fit(o, fc, app, out);
    if (*extract) return cmd_extract(o, out);
    if (*grad) return cmd_gradcheck(o, out);
    if (*report) return cmd_report(o, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRunFailure;
  }
  return kUsage;
}

}  // namespace ginnkan::cli
