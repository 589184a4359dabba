#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cari/attack.hpp"
#include "cari/dataset.hpp"
#include "cari/model.hpp"
#include "cari/objective.hpp"

namespace cari {

// Robust training wraps every batch in the inner worst-case search before the
// outer parameter step; standard training optimizes at the clean points.
enum class TrainMode { Standard, Robust };

// How the contrast permutation inside the mutual-information bound is drawn:
// a fresh uniform draw per batch, or the fixed cyclic shift (i+1 mod n).
enum class ClubPerm { Resample, FixedShift };

// Joint applies one optimizer step to every parameter; Alternating applies
// even-numbered steps to the encoder and predictor and odd-numbered steps to
// the intervention network, all from the same backward pass.
enum class UpdateScheme { Joint, Alternating };

struct TrainConfig {
  TrainMode mode = TrainMode::Standard;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;  // one of {64, 128, 256, 512, 1024}
  double lr = 1e-2;             // one of {1e-1, 1e-2, 1e-3, 1e-4}
  ObjectiveWeights weights;
  ClubPerm club_perm = ClubPerm::Resample;
  UpdateScheme scheme = UpdateScheme::Joint;
  AttackConfig attack;          // inner search (robust mode only)
  std::uint64_t seed = 1;
  std::size_t patience = 10;    // early-stop window on validation AUC
};

// Checks the field domains above, batch_size <= train_rows, the nested weight
// and attack configs, and that the dataset is non-empty.  A robust-mode budget
// of zero is legal (it reproduces standard training exactly) but unusual, so
// it is flagged on stderr rather than rejected.
void validate(const TrainConfig& cfg, std::size_t train_rows);

// Adam moments for one flat parameter; t counts the steps applied so far.
struct AdamState {
  std::vector<double> m, v;
  std::uint64_t t = 0;
};

// In-place Adam update with beta1=0.9, beta2=0.999, eps=1e-8 and bias
// correction.  Sizes must match; moments are allocated on first use.
void adam_step(std::vector<double>& value, const std::vector<double>& grad,
               AdamState& state, double lr);

struct TrainResult {
  ModelState state;                   // parameters at the best epoch
  std::vector<LossBreakdown> epochs;  // one averaged row per completed epoch
  std::size_t best_epoch = 0;         // 1-based; 0 only if no epoch completed
  // Validation AUC at the best epoch.  NaN when the validation split is empty
  // or single-class (the metric is undefined; every epoch then counts as an
  // improvement and training runs to the last epoch).
  double best_val_auc = 0.0;
  // Diagnostic at the returned checkpoint: cross-entropy gap between the
  // shifted and unshifted validation representations.
  double val_intervention_effect = 0.0;
};

// Minibatch training with one RNG stream seeded from derive_seed(seed,
// "train").  Draw order per epoch: the row permutation, then per batch the
// reparameterization noise (only when the KL term is on), the contrast
// permutation (only when the bound term is on and Resample is selected), and
// finally any random-start draws of the inner search.  Terms with weight zero
// are never computed and consume no randomness.  Batches are consecutive
// permutation chunks; a trailing chunk of a single row is dropped (the
// contrast term is undefined on it), larger remainders are kept.
// Throws NumericError (with the term values) if the loss goes non-finite.
TrainResult train(const TrainConfig& cfg, const Dataset& train_data,
                  const Dataset& val_data, const ModelState& init);

// Epoch log in CSV form: header plus one row per epoch, 1-based.
std::string epoch_log_csv(const std::vector<LossBreakdown>& epochs);

}  // namespace cari
