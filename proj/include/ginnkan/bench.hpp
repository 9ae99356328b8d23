// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "ginnkan/nn.hpp"
#include "ginnkan/pinn.hpp"

namespace ginnkan::bench {

struct CorpusEntry {
  std::string id;  // the equation itself, e.g. "x1*x2^2"
  std::size_t features = 2;
  bool lp = false;
  std::function<double(std::span<const double>)> f;
  double lo = 0.5, hi = 3.0;  // uniform sampling range of every variable
};

/// The eight toy equations in table order.
const std::vector<CorpusEntry>& corpus();
/// Adds an equation to the corpus; replaces an entry with the same id.
void register_equation(CorpusEntry entry);
/// Lookup ignoring whitespace. Throws nn::Error listing the corpus.
const CorpusEntry& equation(std::string_view id);

struct SrDataset {
  std::string name;
  bool lp = false;
  nn::Matrix inputs;  // rows x features
  nn::Vector targets;
  std::vector<std::size_t> train, test;  // 75/25

  nn::Matrix rows(const std::vector<std::size_t>& idx) const;
  nn::Vector values(const std::vector<std::size_t>& idx) const;
};

SrDataset generate_dataset(std::string_view id, std::size_t n = 2000, std::uint64_t seed = 0);

struct FitResult {
  std::unique_ptr<nn::Model> model;
  std::vector<double> loss_history;
  double test_mse = 0.0, test_r2 = 0.0;
  double seconds = 0.0;
};

/// Trains a fresh `kind` model on the training split.
FitResult fit(const SrDataset& data, std::string_view kind, const nn::TrainConfig& config);

struct ToyCell {
  std::string dataset, model;
  std::uint64_t seed = 0;
  double mse = 0.0;  // test split
  double r2 = 0.0;
  double seconds = 0.0;
  std::string failure;
};

inline const std::vector<std::string> kToyModels = {"ginn", "kan", "ginn-kan"};

/// Every (dataset, model, seed) cell; the dataset seed equals the run seed.
std::vector<ToyCell> run_toy_study(const std::vector<std::string>& datasets, const std::vector<std::string>& models,
                                   const std::vector<std::uint64_t>& seeds, const nn::TrainConfig& config,
                                   std::size_t jobs = 1);

struct BenchReport {
  std::vector<std::string> datasets, models;
  std::vector<bool> lp;
  std::vector<std::vector<double>> median_mse, median_r2;  // [dataset][model]
  std::vector<std::size_t> winner;                          // per dataset
  std::vector<double> r2_pct;                               // % of datasets with median R^2 > 0.99
  std::vector<double> mean_rank_lp, mean_rank_non_lp, mean_rank_all;
};

/// Medians over seeds, ranks per dataset (ties averaged, failures worst).
/// Datasets follow corpus order, unknown ones last (non-LP).
BenchReport aggregate(const std::vector<ToyCell>& cells, const std::vector<std::string>& model_order = {});

// -- results files -------------------------------------------------------------

/// pde,model,seed,mse,heldout_mse,wall_time,status
void write_pde_csv(std::ostream& os, const std::vector<pinn::SuiteCell>& cells, bool timing);
/// dataset,model,seed,mse,r2,wall_time,status
void write_toy_csv(std::ostream& os, const std::vector<ToyCell>& cells, bool timing);

struct ResultsFile {
  enum class Kind { pde, toy } kind = Kind::pde;
  std::vector<pinn::SuiteCell> pde;
  std::vector<ToyCell> toy;
};
/// Reads either CSV schema. Throws nn::Error on malformed input.
ResultsFile read_results(std::istream& is);

// -- plots ---------------------------------------------------------------------

/// Bar chart of the R^2 > 0.99 percentage per model.
std::string r2_bar_chart(const BenchReport& report);
/// Prediction, analytical solution and absolute error over the problem domain.
std::string solution_heatmap(const pinn::PdeProblem& p, const nn::Model& model, std::size_t resolution = 48);

struct HeatmapData {
  std::size_t resolution = 0;
  std::vector<double> prediction, exact, error;  // row-major, t rows by x columns
};
HeatmapData heatmap_data(const pinn::PdeProblem& p, const nn::Model& model, std::size_t resolution = 48);

}  // namespace ginnkan::bench
