#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "cari/model.hpp"
#include "cari/rng.hpp"
#include "cari/tensor.hpp"

namespace cari {

enum class AttackNorm { Two, Infinity };

// MinimizeMI ascends the cross-entropy surrogate (pushing the information the
// representation carries about the label down); MaximizeMI descends it.
enum class AttackDirection { MinimizeMI, MaximizeMI };

// Projected gradient search inside a per-row norm ball of radius beta around
// the unperturbed representation.
struct AttackConfig {
  AttackNorm norm = AttackNorm::Infinity;
  double beta = 0.0;
  std::size_t steps = 10;
  double step_size = 0.0;  // <= 0 picks the standard 2.5 * beta / steps
  AttackDirection direction = AttackDirection::MinimizeMI;
  bool random_start = false;  // start from a uniform point inside the ball
};

void validate(const AttackConfig& cfg);
double resolved_step_size(const AttackConfig& cfg);

// Builds the per-example loss on the given tape: input z is n x d, the output
// must be n x 1 (one loss per row).  Rows must not interact through the loss;
// per-row best-iterate bookkeeping relies on that.
using RowLossFn = std::function<Tensor(Tape&, const Tensor& z)>;

// Iterates z <- project(z + s * a * dir(grad)) for cfg.steps steps, where dir
// is the coordinate sign for the infinity norm and the row-normalized gradient
// for the 2-norm, s = +1 when ascending (MinimizeMI) and -1 when descending,
// and project clips per coordinate (infinity) or rescales each row radially
// (2-norm) onto the ball around z0.  Returns, per row, the iterate with the
// most adversarial loss seen — the start point is always a candidate, so the
// result is never less adversarial than z0.  beta = 0 returns z0 exactly.
// A zero gradient across the whole batch at the first iterate returns z0
// unchanged and notes the degenerate case on stderr.  rng is only touched
// when cfg.random_start is set (one in-ball draw).
std::vector<double> pgd(const std::vector<double>& z0, std::size_t n,
                        std::size_t d, const RowLossFn& row_loss,
                        const AttackConfig& cfg, Rng* rng = nullptr);

// Per-row cross-entropy of the frozen model's predictor head against y; the
// surrogate both attack directions and the adversarial metrics run on.
RowLossFn row_cross_entropy_fn(const ModelState& state, const std::vector<int>& y);

struct AttackedPair {
  std::vector<double> z, z_bar;
};

// z' attacks the prediction (MinimizeMI); z_bar' strengthens it (MaximizeMI).
// Both stay inside their beta-balls; cfg.direction is ignored.
AttackedPair worst_case_pair(const ModelState& state, const std::vector<double>& z,
                             const std::vector<double>& z_bar, std::size_t n,
                             const std::vector<int>& y, const AttackConfig& cfg,
                             Rng* rng = nullptr);

}  // namespace cari
