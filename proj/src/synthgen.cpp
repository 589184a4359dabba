#include "cari/synthgen.hpp"

#include <cmath>

#include "cari/rng.hpp"

namespace cari {

namespace {

double logistic(double v) {
  return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

// out = A*v where A is rows x cols, row major.
std::vector<double> matvec(const std::vector<double>& a, std::size_t rows,
                           std::size_t cols, const std::vector<double>& v) {
  std::vector<double> out(rows, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += a[i * cols + j] * v[j];
    out[i] = s;
  }
  return out;
}

// Shared branch template: b1 = A*k1(k2(u)) + q, b2 = A*k3(k2(-u)) + q,
// returned pre-sigmoid as b1 + b1 .* b2.  Note k2 never emits negatives, so
// k3(k2(.)) is identically zero and b2 is the constant q — kept written out
// because that is the generating process as specified, not an optimization
// target.
std::vector<double> branch_activations(const std::vector<double>& a, std::size_t rows,
                                       const std::vector<double>& u, double q) {
  const std::size_t cols = u.size();
  std::vector<double> pos(cols), neg(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    pos[j] = kappa1(kappa2(u[j]));
    neg[j] = kappa3(kappa2(-u[j]));
  }
  std::vector<double> b1 = matvec(a, rows, cols, pos);
  std::vector<double> b2 = matvec(a, rows, cols, neg);
  std::vector<double> s(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const double v1 = b1[i] + q;
    const double v2 = b2[i] + q;
    s[i] = v1 + v1 * v2;
  }
  return s;
}

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

void validate(const ScmConfig& cfg) {
  if (cfg.n < 1) throw ConfigError("scm: n must be >= 1");
  if (cfg.beta < 0.0) throw ConfigError("scm: beta must be >= 0");
  if (cfg.d1 < 1 || cfg.d2 < 1 || cfg.d3 < 1) {
    throw ConfigError("scm: factor dimensions must be >= 1");
  }
}

double kappa1(double x) { return x > 0.0 ? x - 0.5 : 0.0; }
double kappa2(double x) { return x > 0.0 ? x : 0.0; }
double kappa3(double x) { return x < 0.0 ? x + 0.5 : 0.0; }

MixingMatrices make_mixing(const ScmConfig& cfg) {
  Rng rng(derive_seed(cfg.mixing_seed, "mixing"));
  MixingMatrices mix;
  mix.a1.resize(cfg.d2 * 2 * cfg.d1);
  mix.a2.resize(cfg.d1 * 2 * cfg.d1);
  mix.a3.resize(cfg.d3 * (1 + cfg.d1));
  rng.fill_normal(mix.a1, 0.0, 1.0);
  rng.fill_normal(mix.a2, 0.0, 1.0);
  rng.fill_normal(mix.a3, 0.0, 1.0);
  return mix;
}

std::vector<double> nd_from(const ScmConfig& cfg, const MixingMatrices& mix,
                            const std::vector<double>& pa, const std::vector<double>& eps) {
  std::vector<double> s = branch_activations(mix.a1, cfg.d2, concat(pa, eps), cfg.q);
  for (double& v : s) v = logistic(v);
  return s;
}

std::vector<double> label_activations(const ScmConfig& cfg, const MixingMatrices& mix,
                                      const std::vector<double>& pa,
                                      const std::vector<double>& eps) {
  return branch_activations(mix.a2, cfg.d1, concat(pa, eps), cfg.q);
}

int label_from(const ScmConfig& cfg, const std::vector<double>& activations) {
  double m = 0.0;
  for (const double s : activations) {
    m += cfg.label_rule == LabelRule::SigmaMean ? logistic(s) : s;
  }
  m /= static_cast<double>(activations.size());
  return cfg.label_rule == LabelRule::SigmaMean ? (m > 0.5 ? 1 : 0) : (m > 0.0 ? 1 : 0);
}

std::vector<double> dc_from(const ScmConfig& cfg, const MixingMatrices& mix, int y,
                            const std::vector<double>& eps) {
  std::vector<double> u(1 + eps.size());
  u[0] = static_cast<double>(y);
  for (std::size_t j = 0; j < eps.size(); ++j) u[1 + j] = eps[j];
  std::vector<double> s = branch_activations(mix.a3, cfg.d3, u, cfg.q);
  for (double& v : s) v = logistic(v);
  return s;
}

Dataset generate(const ScmConfig& cfg) {
  validate(cfg);
  const MixingMatrices mix = make_mixing(cfg);
  const double noise_sd = std::sqrt(cfg.beta);

  Dataset ds;
  ds.kind = Dataset::Kind::Factor;
  ds.d_pa = cfg.d1;
  ds.d_nd = cfg.d2;
  ds.d_dc = cfg.d3;
  ds.x_dim = cfg.d1 + cfg.d2 + cfg.d3;
  ds.pa.reserve(cfg.n * cfg.d1);
  ds.nd.reserve(cfg.n * cfg.d2);
  ds.dc.reserve(cfg.n * cfg.d3);
  ds.x.reserve(cfg.n * ds.x_dim);
  ds.y.reserve(cfg.n);

  for (std::size_t i = 0; i < cfg.n; ++i) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    std::vector<double> pa(cfg.d1), eps(cfg.d1);
    rng.fill_uniform(pa, -1.0, 1.0);
    rng.fill_normal(eps, kEpsMean, noise_sd);  // one draw shared by all branches

    const std::vector<double> nd = nd_from(cfg, mix, pa, eps);
    const int y = label_from(cfg, label_activations(cfg, mix, pa, eps));
    const std::vector<double> dc = dc_from(cfg, mix, y, eps);

    ds.pa.insert(ds.pa.end(), pa.begin(), pa.end());
    ds.nd.insert(ds.nd.end(), nd.begin(), nd.end());
    ds.dc.insert(ds.dc.end(), dc.begin(), dc.end());
    ds.x.insert(ds.x.end(), pa.begin(), pa.end());
    ds.x.insert(ds.x.end(), nd.begin(), nd.end());
    ds.x.insert(ds.x.end(), dc.begin(), dc.end());
    ds.y.push_back(y);
  }
  return ds;
}

}  // namespace cari
