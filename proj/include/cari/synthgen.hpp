#pragma once

#include <cstdint>
#include <vector>

#include "cari/dataset.hpp"

namespace cari {

// How the binary label is read off the y-branch activations s = y1 + y1*y2:
//   SigmaMean     — y = 1[mean(sigmoid(s)) > 0.5]   (default)
//   PreSigmoidSum — y = 1[mean(s) > 0]
enum class LabelRule { SigmaMean, PreSigmoidSum };

// Default mixing seed shipped with the generator; chosen so the label stays
// balanced (fraction of y=1 inside (0.05, 0.95)) across noise beta in [0, 1].
inline constexpr std::uint64_t kDefaultMixingSeed = 7;

struct ScmConfig {
  std::size_t n = 500;      // sample count
  double beta = 0.3;        // noise variance (not stddev)
  double q = 0.3;           // additive offset in every branch
  std::size_t d1 = 5;       // parent block dimension (also the noise dimension)
  std::size_t d2 = 5;       // non-descendant block dimension
  std::size_t d3 = 5;       // descendant block dimension
  std::uint64_t seed = 1;   // per-sample randomness (pa, noise)
  std::uint64_t mixing_seed = kDefaultMixingSeed;  // frozen mixing matrices
  LabelRule label_rule = LabelRule::SigmaMean;
};

void validate(const ScmConfig& cfg);

// Nonlinearities applied elementwise inside every branch.
double kappa1(double x);  // x - 0.5 if x > 0 else 0
double kappa2(double x);  // max(x, 0)
double kappa3(double x);  // x + 0.5 if x < 0 else 0

// Frozen mixing matrices, entries N(0,1) drawn from mixing_seed in the order
// a1 (d2 x 2*d1), a2 (d1 x 2*d1), a3 (d3 x (1+d1)), each row major.
struct MixingMatrices {
  std::vector<double> a1, a2, a3;
};
MixingMatrices make_mixing(const ScmConfig& cfg);

// Structural equations for one sample, exposed so tests can regenerate a
// factor block from its stored inputs.  `eps` has length d1.
//
// Every branch follows the same template with input u and matrix A:
//   b1 = A*kappa1(kappa2(u)) + q,  b2 = A*kappa3(kappa2(-u)) + q,
//   out = sigmoid(b1 + b1 .* b2).
// nd uses u = [pa, eps]; the label's activations use u = [pa, eps] through a2
// (returned pre-sigmoid as s = y1 + y1 .* y2); dc uses u = [y, eps].
std::vector<double> nd_from(const ScmConfig& cfg, const MixingMatrices& mix,
                            const std::vector<double>& pa, const std::vector<double>& eps);
std::vector<double> label_activations(const ScmConfig& cfg, const MixingMatrices& mix,
                                      const std::vector<double>& pa,
                                      const std::vector<double>& eps);
int label_from(const ScmConfig& cfg, const std::vector<double>& activations);
std::vector<double> dc_from(const ScmConfig& cfg, const MixingMatrices& mix, int y,
                            const std::vector<double>& eps);

// Mean of the shared noise draw (fixed by the generating process, independent
// of the offset q even though both default to 0.3).
inline constexpr double kEpsMean = 0.3;

// Full dataset: per sample i an RNG stream derived from (seed, i) draws
// pa ~ U(-1,1)^d1 then one shared eps ~ N(kEpsMean*1, beta*I) used by every
// branch.  x = [pa, nd, dc].
Dataset generate(const ScmConfig& cfg);

}  // namespace cari
