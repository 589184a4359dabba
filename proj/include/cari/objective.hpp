#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cari/model.hpp"
#include "cari/rng.hpp"
#include "cari/tensor.hpp"

namespace cari {

// Term weights for the training objective
//   total = nll + (1/lambda)*kl + club_weight*club + t_weight*t_pen.
// use_kl=false drops the KL term entirely (the lambda -> infinity ablation).
// A weight of exactly zero means the term is structurally off: it is never
// computed, consumes no randomness, and is logged as 0.
struct ObjectiveWeights {
  double lambda = 10.0;      // divides the KL term; sensible range [1, 100]
  bool use_kl = true;
  double club_weight = 1.0;  // mutual-information upper-bound penalty
  double t_weight = 1.0;     // intervention-magnitude constraint
  double t_target = 0.8;     // b in (t^2 - b)^2
};

void validate(const ObjectiveWeights& w);

// Per-batch scalar value of every objective term, for logging.  In standard
// training total_robust simply repeats total_standard; in robust training the
// nll and club inside total_robust are evaluated at the attacked points.
struct LossBreakdown {
  double nll = 0.0;
  double kl = 0.0;
  double club = 0.0;
  double t_pen = 0.0;
  double total_standard = 0.0;
  double total_robust = 0.0;
  double lambda = 0.0;
};

// Epoch log format, one row per epoch.
std::string epoch_csv_header();
std::string epoch_csv_row(std::size_t epoch, const LossBreakdown& b);

// ---- differentiable term builders -------------------------------------------

// Mean over the batch of KL( N(mu_i, diag e^{logvar_i}) || prior_i ), each row
// in closed form 0.5 * sum_j (e^{lv_ij} + (mu_ij - m_ij)^2 - 1 - lv_ij).  The
// prior mean m_i is 0 for Standard and y_i * (1,...,1) for ConditionalLabel.
Tensor kl_closed_form(const Tensor& mu, const Tensor& logvar, PriorKind prior,
                      const std::vector<int>& y);

// nll = softmax cross-entropy of the predictor on z against y; kl as above,
// with the prior kind taken from the model config.
struct VibTerms {
  Tensor nll, kl;
};
VibTerms vib_bound(Tape& tape, const ModelState& state, const ModelBinding& bind,
                   const Tensor& z, const Tensor& mu, const Tensor& logvar,
                   const std::vector<int>& y);

// Upper bound on the mutual information between the shifted representation
// and the label:
//     mean_i log p(y_i | zbar_i)  -  mean_i log p(y_{perm(i)} | zbar_i)
// with p the softmax of the predictor head.  perm must be a permutation of
// 0..n-1; the Rng overload draws it uniformly (exactly one permutation draw).
// Requires n >= 2 (the contrast needs at least two rows).
//
// The bound shapes the representation, not the head: the predictor weights
// enter as constants here, so the gradient reaches z_bar (and through it the
// encoder and intervention nets) but never the head's parameters.  The head
// is trained by the likelihood term alone, which keeps it an honest
// conditional estimator; descending this bound through the head is an
// unbounded anti-prediction direction that diverges within a few epochs.
Tensor club_upper(Tape& tape, const ModelState& state, const Tensor& z_bar,
                  const std::vector<int>& y,
                  const std::vector<std::size_t>& perm);
Tensor club_upper(Tape& tape, const ModelState& state, const Tensor& z_bar,
                  const std::vector<int>& y, Rng& rng);

// Mean over all batch entries of (t^2 - target)^2.
Tensor t_constraint(const Tensor& t, double target);

// total = nll + (1/lambda)*kl + club_weight*club + t_weight*t_pen, skipping
// absent terms.  Throws NumericError when any present term is non-finite
// (training divergence), carrying the term values in the message.
Tensor assemble(const Tensor& nll, const std::optional<Tensor>& kl,
                const std::optional<Tensor>& club,
                const std::optional<Tensor>& t_pen, const ObjectiveWeights& w);
double assemble_value(double nll, double kl, double club, double t_pen,
                      const ObjectiveWeights& w);

// ---- value-level diagnostics (no gradients) ----------------------------------

// Mean softmax cross-entropy in nats of raw logit rows against labels.
double mean_cross_entropy(const std::vector<double>& logits, std::size_t n,
                          std::size_t classes, const std::vector<int>& y);
// Empirical entropy of the batch label distribution in nats.
double label_entropy(const std::vector<int>& y, std::size_t classes);
// H(Y) - CE(g(z), y): cross-entropy proxy for the information the predictor
// extracts from z about y.
double mi_proxy(const ModelState& state, const std::vector<double>& z,
                std::size_t n, const std::vector<int>& y);
// Proxy I(Z;Y) - proxy I(Zbar;Y), which reduces to
// CE(g(zbar), y) - CE(g(z), y).  Monitoring only; never optimized directly.
double intervention_effect(const ModelState& state, const std::vector<double>& z,
                           const std::vector<double>& z_bar, std::size_t n,
                           const std::vector<int>& y);

}  // namespace cari
