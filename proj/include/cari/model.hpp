#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cari/dataset.hpp"
#include "cari/tensor.hpp"

namespace cari {

// Prior over the representation used by the KL term:
//   Standard         — N(0, I)
//   ConditionalLabel — N(y*1, I): mean 0 for label 0, all-ones for label 1.
enum class PriorKind { Standard, ConditionalLabel };

// One learnable parameter matrix (rows x cols, row major).  Bias vectors are
// stored 1 x cols.
struct Param {
  std::string name;
  std::size_t rows = 0, cols = 0;
  std::vector<double> value;

  std::size_t size() const { return rows * cols; }
};

struct ModelConfig {
  // Input description: feature models read x_dim columns; id models embed
  // (user, item) pairs, each table embed_dim wide, concatenated.
  bool id_input = false;
  std::size_t x_dim = 0;
  std::size_t num_users = 0, num_items = 0;
  std::size_t embed_dim = 32;

  std::size_t z_dim = 64;
  std::size_t hidden = 64;
  PriorKind prior = PriorKind::Standard;
  double t_target = 0.8;  // b: target squared magnitude of the intervention

  std::size_t d_in() const { return id_input ? 2 * embed_dim : x_dim; }
};

ModelConfig model_config_for(const Dataset& ds);
void validate(const ModelConfig& cfg);

// The three networks.  Encoder: Linear(d_in, hidden) + ELU, Linear(hidden,
// 2*z_dim) split into (mu, logvar), logvar clamped to [-10, 10].  The
// intervention net k mirrors the encoder but emits t of width z_dim.  The
// predictor g: Linear(z_dim, hidden) + ELU, Linear(hidden, 2) class logits.
// Id models prepend per-network (user, item) embedding tables.
struct ModelState {
  ModelConfig cfg;
  // encoder
  Param enc_user, enc_item, enc_w1, enc_b1, enc_w2, enc_b2;
  // intervention network
  Param int_user, int_item, int_w1, int_b1, int_w2, int_b2;
  // predictor
  Param pred_w1, pred_b1, pred_w2, pred_b2;

  // Parameters in manifest order (id tables only when id_input).
  std::vector<Param*> params();
  std::vector<const Param*> params() const;
};

// Weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) drawn from the run seed in
// manifest order; biases zero.  Embedding tables use fan_in = embed_dim so
// early representations stay O(1).
ModelState init_model(const ModelConfig& cfg, std::uint64_t seed);

// One training batch in model-ready form.
struct Batch {
  std::size_t n = 0;
  std::vector<double> x;  // n * x_dim (feature input)
  std::vector<std::size_t> user, item;  // id input
  std::vector<int> y;
};
Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices);
Batch full_batch(const Dataset& ds);

// Binds every parameter to a tensor on a tape.  `leaves` gives each parameter
// its own leaf (training reads per-parameter gradients); `packed` views all
// parameters as slices of one flat leaf so a finite-difference harness can
// perturb a single vector.
class ModelBinding {
 public:
  static ModelBinding leaves(Tape& tape, const ModelState& state);
  static ModelBinding packed(Tape& tape, const ModelState& state);

  Tensor at(const Param& p) const;
  Tensor packed_leaf() const { return packed_; }

 private:
  std::vector<std::pair<const Param*, Tensor>> entries_;
  Tensor packed_;
};

// Forward passes on a tape (differentiable).  Pure given (state, batch).
struct EncodeOut {
  Tensor mu, logvar;  // n x z_dim each
};
EncodeOut encode_fwd(Tape& tape, const ModelState& state, const ModelBinding& bind,
                     const Batch& batch);
// t = k(x); callers form z_bar = add(z, t).
Tensor intervene_fwd(Tape& tape, const ModelState& state, const ModelBinding& bind,
                     const Batch& batch);
Tensor predict_fwd(Tape& tape, const ModelState& state, const ModelBinding& bind,
                   const Tensor& z);
// z = mu + exp(0.5*logvar) .* noise
Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise);

// Convenience forwards without gradient bookkeeping (evaluation paths).
// encode_mean returns mu rows only: evaluation uses the posterior mean.
std::vector<double> encode_mean(const ModelState& state, const Batch& batch);
std::vector<double> intervene_values(const ModelState& state, const Batch& batch);
std::vector<double> predict_logits(const ModelState& state, const std::vector<double>& z,
                                   std::size_t n);
// p(y=1|z) per row from logits.
std::vector<double> positive_scores(const ModelState& state, const std::vector<double>& z,
                                    std::size_t n);

// ---- checkpoints -------------------------------------------------------------
// `prefix`.json holds shapes/config/extra metadata; `prefix`.bin is a flat
// little-endian float64 blob of parameter values in manifest order.

void save_checkpoint(const std::string& prefix, const ModelState& state,
                     const std::string& extra_json = "{}");
ModelState load_checkpoint(const std::string& prefix, std::string* extra_json = nullptr);

}  // namespace cari
