#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cari/attack.hpp"
#include "cari/dataset.hpp"
#include "cari/metrics.hpp"
#include "cari/synthgen.hpp"
#include "cari/trainer.hpp"

namespace cari {

// Ablation presets.  A preset pins which objective terms are active and which
// prior the KL uses; magnitudes (lambda, the weights of active terms,
// t_target) stay as configured.  Asking for a preset while zeroing one of its
// active terms is a config error rather than a silent repair.
//   Base  — plain classifier: no KL, no contrast bound, no intervention
//           constraint; z is the posterior mean (no sampling).
//   Ib    — KL against the standard normal prior, nothing else.
//   RCvae — KL against the label-conditional prior plus the intervention
//           constraint; no contrast bound.
//   Cari  — everything on, label-conditional prior.
enum class Method { Base, Ib, RCvae, Cari };

Method method_from_name(const std::string& name);  // base | ib | r-cvae | cari
std::string method_name(Method m);

// Exactly one sample source: a synthetic draw or a CSV file.
struct DatasetSource {
  bool synthetic = true;
  ScmConfig scm;  // synthetic source; scm.seed resolves from the master seed
  std::string csv_path;
  Dataset::Kind csv_kind = Dataset::Kind::Factor;
  std::optional<double> label_threshold;  // rating schemas: label >= threshold
};

struct SplitSpec {
  double train = 0.64, val = 0.16, test = 0.20;
};

// One description drives every subcommand.  A single master seed feeds four
// independent streams (data draw, split shuffle, parameter init, training);
// any stream seed set explicitly in the config wins over its derived value,
// and the resolved snapshot always records the concrete stream seeds, so a
// run can be reproduced bit-exactly from its snapshot alone.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> data_seed;   // derive_seed(seed, "data")
  std::optional<std::uint64_t> split_seed;  // derive_seed(seed, "split")
  std::optional<std::uint64_t> model_seed;  // derive_seed(seed, "model")
  std::optional<std::uint64_t> train_seed;  // derive_seed(seed, "train")

  Method method = Method::Cari;
  DatasetSource dataset;
  SplitSpec split;

  // Model shape; the input wiring (feature vs id) follows the dataset.
  std::size_t z_dim = 64, hidden = 64, embed_dim = 32;

  TrainConfig train;  // train.seed is overwritten by the resolved stream seed

  // Evaluation grid: clean metrics always, one adversarial entry per config.
  std::vector<AttackConfig> eval{
      AttackConfig{.norm = AttackNorm::Infinity, .beta = 0.3},
      AttackConfig{.norm = AttackNorm::Two, .beta = 0.3}};

  std::string out_dir = "out";

  // scaling-check
  std::vector<std::size_t> scaling_m{100, 400, 1600, 6400};
  std::size_t scaling_seeds = 10;
  std::size_t scaling_m_ref = 100000;
  std::size_t scaling_bins = 4;

  // sweep grid; workers = 0 picks the hardware concurrency
  std::vector<std::uint64_t> sweep_seeds{1, 2, 3, 4, 5};
  std::vector<Method> sweep_methods{Method::Base, Method::Cari};
  std::vector<double> sweep_betas{0.3};
  std::size_t sweep_workers = 0;
};

// JSON round trip.  Parsing rejects unknown keys (typos fail loudly), checks
// value domains it can see locally, and leaves everything absent at the
// defaults above.  `resolved_json` emits the full resolved state; feeding it
// back through `experiment_from_json` + `resolve` is the identity.
ExperimentConfig experiment_from_json(const std::string& text);
ExperimentConfig load_experiment_file(const std::string& path);
std::string resolved_json(const ExperimentConfig& cfg);

// Fills the stream seeds from the master seed and applies the method preset
// to the objective switches and the prior.  Idempotent.
ExperimentConfig resolve(const ExperimentConfig& cfg);

// Loads the configured source; the synthetic draw happens on the fly.  A csv
// path that does not exist is a config error (caught before any compute);
// malformed content inside an existing file is a data error.
Dataset load_dataset(const ExperimentConfig& cfg);

// Model wiring for this config on this dataset.
ModelConfig model_config_from(const ExperimentConfig& cfg, const Dataset& ds);

// ---- evaluation report --------------------------------------------------------

struct AttackReport {
  AttackConfig attack;
  AdvMetrics adv;
};

struct MetricsReport {
  std::string method, mode;
  std::uint64_t seed = 0;
  CleanMetrics clean;
  std::vector<AttackReport> attacks;
  // Factor datasets only: dependence of the representation on each causal
  // block, and the label-sufficiency probe.
  bool factor = false;
  double dcor_pa = 0.0, dcor_nd = 0.0, dcor_dc = 0.0, cmi = 0.0;
};

std::string metrics_json(const MetricsReport& r);
std::string metrics_csv_header();
// One line per attack entry, keyed (method, mode, norm, beta, seed).
std::string metrics_csv_rows(const MetricsReport& r);

// ---- subcommands ---------------------------------------------------------------
// Every command creates cfg.out_dir if needed, never mutates its inputs, and
// is reproducible from the resolved snapshot it writes.

// data.csv (factor schema) plus data.json sidecar with the full generator
// config.  Synthetic source only.
void cmd_gen_data(const ExperimentConfig& cfg);

struct TrainArtifacts {
  TrainResult result;
  std::string checkpoint_prefix;  // <out>/checkpoint{.json,.bin}
  std::string epochs_csv;         // <out>/epochs.csv
  std::string snapshot;           // <out>/resolved_config.json
};
TrainArtifacts cmd_train(const ExperimentConfig& cfg);

// Loads <out>/checkpoint, evaluates on the test split, writes metrics.json
// and appends metrics.csv (header written once).
MetricsReport cmd_eval(const ExperimentConfig& cfg);

// scaling.csv plus scaling.json (fitted exponent and quartile table) from a
// fresh deterministic model at the resolved model seed.  Synthetic only.
ScalingCheck cmd_scaling_check(const ExperimentConfig& cfg);

// Fans the (sweep_seeds x sweep_methods x sweep_betas) grid out over worker
// threads; each cell trains and evaluates in its own subdirectory of
// <out>/runs, and <out>/metrics.csv collects every row in grid order.
void cmd_sweep(const ExperimentConfig& cfg);

// Entry point shared by the binary and the tests: parses flags (flag beats
// config file beats default), dispatches, and maps errors to exit codes
// (0 ok, 2 config, 3 data, 4 numeric divergence).
int run_cli(const std::vector<std::string>& args);

}  // namespace cari
