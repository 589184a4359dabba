#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cari/attack.hpp"
#include "cari/dataset.hpp"
#include "cari/model.hpp"
#include "cari/synthgen.hpp"

namespace cari {

// ---- classification metrics ---------------------------------------------------

// Mann-Whitney AUC with half credit for tied scores.  Needs at least one
// positive and one negative label; a single-class input is a data error.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Fraction of rows where (score > threshold) equals the label.
double acc(const std::vector<double>& scores, const std::vector<int>& labels,
           double threshold = 0.5);

struct CleanMetrics {
  double auc = 0.0, acc = 0.0;
};
// Encode the dataset to posterior means, score with the predictor head.
CleanMetrics clean_metrics(const ModelState& state, const Dataset& data);

struct AdvMetrics {
  double adv_auc = 0.0, adv_acc = 0.0;
};
// Same, but each representation is first attacked (direction MinimizeMI) at
// the configured norm and budget.  beta = 0 reproduces clean_metrics exactly.
// Rows are attacked in chunks of at most 1024; results are chunk-invariant.
AdvMetrics adv_metrics(const ModelState& state, const Dataset& data,
                       const AttackConfig& cfg);

// ---- distance correlation -------------------------------------------------------

// Szekely's distance correlation between the n x p block a and the n x q
// block b: double-centered Euclidean distance matrices, V-statistic form,
// result in [0,1].  Returns 0 when either marginal distance variance is 0.
// O(n^2) time, O(n) memory.
double distance_correlation(const std::vector<double>& a, std::size_t p,
                            const std::vector<double>& b, std::size_t q,
                            std::size_t n);

// ---- quantization (shared by the information probes) ----------------------------

// Projects onto the leading principal components (at most two) and bins each
// projected coordinate with 1-d k-means centers; a cell index combines the
// per-coordinate bins.  Frozen after fitting, so the same partition can be
// applied to fresh samples.
struct ZQuantizer {
  std::size_t dim = 0;                         // input width d
  std::vector<double> mean;                    // d
  std::vector<double> components;              // n_comp x d rows
  std::vector<std::vector<double>> centers;    // per component, sorted

  std::size_t cells() const;
  std::vector<std::size_t> assign(const std::vector<double>& data,
                                  std::size_t n) const;
};

ZQuantizer fit_quantizer(const std::vector<double>& data, std::size_t n,
                         std::size_t d, std::size_t bins_per_dim);

// 1-d k-means: centers seeded at evenly spaced quantiles, 25 Lloyd rounds,
// returned sorted ascending.
std::vector<double> kmeans_1d(const std::vector<double>& values, std::size_t k);

// Plug-in mutual information in nats between cell assignments and labels,
// no smoothing; empty cells contribute nothing.
double discrete_mutual_information(const std::vector<std::size_t>& cells,
                                   std::size_t n_cells,
                                   const std::vector<int>& y);

// Conditional mutual information I(Y; W | Z) of the smoothed joint histogram
// over (z cell, w cell, y), additive smoothing alpha on every joint cell.
// Non-negative by construction (it is the exact CMI of the smoothed law).
double smoothed_cmi(const std::vector<std::size_t>& z_cells, std::size_t nz,
                    const std::vector<std::size_t>& w_cells, std::size_t nw,
                    const std::vector<int>& y, double alpha = 1e-3);

// Sufficiency probe: I(Y; [pa, nd] | Z) after quantizing z and the
// concatenated (pa, nd) block to `bins_per_dim` bins per projected dimension.
// Small values mean z screens the label off its parents and non-descendants.
double cmi_probe(const std::vector<double>& z, std::size_t z_dim,
                 const std::vector<double>& pa, std::size_t pa_dim,
                 const std::vector<double>& nd, std::size_t nd_dim,
                 const std::vector<int>& y, std::size_t n,
                 std::size_t bins_per_dim = 4);

// ---- sample-complexity scaling check ---------------------------------------------

// How the plug-in information estimate converges: the quantizer and the
// reference value are fitted on one large draw (m_ref samples), then for each
// m and seed a fresh draw of m samples is scored through the frozen quantizer
// and its absolute gap to the reference recorded.
struct ScalingCheck {
  std::vector<std::size_t> m_list;
  std::vector<double> median_gap, q25, q75;  // over seeds, one entry per m
  std::vector<std::vector<double>> seed_gaps;  // per m, one gap per seed
  double gamma = 0.0;                        // fitted exponent: gap ~ m^-gamma
  double ref_info = 0.0;                     // reference estimate at m_ref
  std::size_t seeds = 0;
};

ScalingCheck scaling_check(const ScmConfig& gen_cfg, const ModelState& model,
                           const std::vector<std::size_t>& m_list,
                           std::size_t n_seeds, std::size_t m_ref = 100000,
                           std::size_t bins_per_dim = 4);

std::string scaling_csv(const ScalingCheck& sc);

// Interpolating (type-7) quantile of a sample; q in [0,1].
double quantile(std::vector<double> values, double q);

}  // namespace cari
