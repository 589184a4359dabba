#include "cari/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cari/errors.hpp"
#include "cari/rng.hpp"

namespace cari {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  const std::size_t n = scores.size();
  if (labels.size() != n) throw ConfigError("auc: scores/labels size mismatch");
  if (n == 0) throw ConfigError("auc: empty input");
  std::size_t pos = 0;
  for (const int l : labels) {
    if (l != 0 && l != 1) throw DataError("auc: labels must be 0/1");
    pos += static_cast<std::size_t>(l);
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0)
    throw DataError("auc: undefined for single-class labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // Average ranks over tie groups; sum the positive ranks.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

double acc(const std::vector<double>& scores, const std::vector<int>& labels,
           double threshold) {
  const std::size_t n = scores.size();
  if (labels.size() != n) throw ConfigError("acc: scores/labels size mismatch");
  if (n == 0) throw ConfigError("acc: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i)
    if ((scores[i] > threshold ? 1 : 0) == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(n);
}

CleanMetrics clean_metrics(const ModelState& state, const Dataset& data) {
  const Batch batch = full_batch(data);
  const std::vector<double> z = encode_mean(state, batch);
  const std::vector<double> scores = positive_scores(state, z, batch.n);
  return {auc(scores, data.y), acc(scores, data.y)};
}

AdvMetrics adv_metrics(const ModelState& state, const Dataset& data,
                       const AttackConfig& cfg) {
  validate(cfg);
  const Batch batch = full_batch(data);
  const std::size_t n = batch.n;
  const std::size_t d = state.cfg.z_dim;
  std::vector<double> z = encode_mean(state, batch);

  AttackConfig attack = cfg;
  attack.direction = AttackDirection::MinimizeMI;
  constexpr std::size_t kChunk = 1024;
  std::vector<double> z_adv(n * d);
  for (std::size_t at = 0; at < n; at += kChunk) {
    const std::size_t m = std::min(kChunk, n - at);
    const std::vector<double> part(z.begin() + static_cast<std::ptrdiff_t>(at * d),
                                   z.begin() + static_cast<std::ptrdiff_t>((at + m) * d));
    const std::vector<int> y_part(data.y.begin() + static_cast<std::ptrdiff_t>(at),
                                  data.y.begin() + static_cast<std::ptrdiff_t>(at + m));
    const std::vector<double> attacked =
        pgd(part, m, d, row_cross_entropy_fn(state, y_part), attack);
    std::copy(attacked.begin(), attacked.end(),
              z_adv.begin() + static_cast<std::ptrdiff_t>(at * d));
  }
  const std::vector<double> scores = positive_scores(state, z_adv, n);
  return {auc(scores, data.y), acc(scores, data.y)};
}

// ---- distance correlation -------------------------------------------------------

namespace {

double row_distance(const double* a, const double* b, std::size_t p) {
  double s = 0.0;
  for (std::size_t j = 0; j < p; ++j) {
    const double e = a[j] - b[j];
    s += e * e;
  }
  return std::sqrt(s);
}

}  // namespace

double distance_correlation(const std::vector<double>& a, std::size_t p,
                            const std::vector<double>& b, std::size_t q,
                            std::size_t n) {
  if (n < 2) throw ConfigError("distance_correlation: needs at least 2 rows");
  if (p == 0 || q == 0) throw ConfigError("distance_correlation: empty block");
  if (a.size() != n * p || b.size() != n * q)
    throw ConfigError("distance_correlation: block size does not match n");

  // Pass 1: per-row means and grand means of both distance matrices.
  std::vector<double> am(n, 0.0), bm(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = row_distance(&a[i * p], &a[j * p], p);
      const double db = row_distance(&b[i * q], &b[j * q], q);
      am[i] += da;
      am[j] += da;
      bm[i] += db;
      bm[j] += db;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  double ag = 0.0, bg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ag += am[i];
    bg += bm[i];
    am[i] *= inv_n;
    bm[i] *= inv_n;
  }
  ag *= inv_n * inv_n;
  bg *= inv_n * inv_n;

  // Pass 2: accumulate the three double-centered products.
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    // Diagonal term (distance zero).
    const double adi = -2.0 * am[i] + ag + 0.0;
    const double bdi = -2.0 * bm[i] + bg;
    sab += adi * bdi;
    saa += adi * adi;
    sbb += bdi * bdi;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = row_distance(&a[i * p], &a[j * p], p) - am[i] - am[j] + ag;
      const double db = row_distance(&b[i * q], &b[j * q], q) - bm[i] - bm[j] + bg;
      sab += 2.0 * da * db;
      saa += 2.0 * da * da;
      sbb += 2.0 * db * db;
    }
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  const double r2 = sab / std::sqrt(saa * sbb);
  return std::sqrt(std::clamp(r2, 0.0, 1.0));
}

// ---- quantization ----------------------------------------------------------------

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ConfigError("quantile: empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("quantile: q outside [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<double> kmeans_1d(const std::vector<double>& values, std::size_t k) {
  if (values.empty()) throw ConfigError("kmeans_1d: empty sample");
  if (k == 0) throw ConfigError("kmeans_1d: k must be positive");
  std::vector<double> centers(k);
  for (std::size_t c = 0; c < k; ++c)
    centers[c] = quantile(values, (static_cast<double>(c) + 0.5) /
                                      static_cast<double>(k));
  std::vector<double> sums(k);
  std::vector<std::size_t> counts(k);
  for (int round = 0; round < 25; ++round) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (const double v : values) {
      std::size_t best = 0;
      double best_d = std::abs(v - centers[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double d = std::abs(v - centers[c]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      sums[best] += v;
      counts[best] += 1;
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
  }
  std::sort(centers.begin(), centers.end());
  return centers;
}

namespace {

// Cyclic Jacobi eigensolver for a symmetric matrix (row major).  Eigenvectors
// come back as columns of v.
void jacobi_eigen(std::vector<double>& m, std::size_t d, std::vector<double>& v) {
  v.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) off += std::abs(m[i * d + j]);
    if (off < 1e-13) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = m[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double app = m[p * d + p], aqq = m[q * d + q];
        const double theta = 0.5 * (aqq - app) / apq;
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t i = 0; i < d; ++i) {
          const double mip = m[i * d + p], miq = m[i * d + q];
          m[i * d + p] = c * mip - s * miq;
          m[i * d + q] = s * mip + c * miq;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double mpi = m[p * d + i], mqi = m[q * d + i];
          m[p * d + i] = c * mpi - s * mqi;
          m[q * d + i] = s * mpi + c * mqi;
        }
        for (std::size_t i = 0; i < d; ++i) {
          const double vip = v[i * d + p], viq = v[i * d + q];
          v[i * d + p] = c * vip - s * viq;
          v[i * d + q] = s * vip + c * viq;
        }
      }
    }
  }
}

}  // namespace

std::size_t ZQuantizer::cells() const {
  std::size_t total = 1;
  for (const auto& c : centers) total *= c.size();
  return total;
}

std::vector<std::size_t> ZQuantizer::assign(const std::vector<double>& data,
                                            std::size_t n) const {
  if (data.size() != n * dim)
    throw ConfigError("quantizer: data size does not match n*dim");
  const std::size_t n_comp = centers.size();
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t cell = 0, radix = 1;
    for (std::size_t c = 0; c < n_comp; ++c) {
      double proj = 0.0;
      for (std::size_t j = 0; j < dim; ++j)
        proj += (data[i * dim + j] - mean[j]) * components[c * dim + j];
      const auto& ctr = centers[c];
      std::size_t best = 0;
      double best_d = std::abs(proj - ctr[0]);
      for (std::size_t b = 1; b < ctr.size(); ++b) {
        const double dist = std::abs(proj - ctr[b]);
        if (dist < best_d) {
          best_d = dist;
          best = b;
        }
      }
      cell += radix * best;
      radix *= ctr.size();
    }
    out[i] = cell;
  }
  return out;
}

ZQuantizer fit_quantizer(const std::vector<double>& data, std::size_t n,
                         std::size_t d, std::size_t bins_per_dim) {
  if (n < 2) throw ConfigError("fit_quantizer: needs at least 2 rows");
  if (d == 0 || bins_per_dim == 0)
    throw ConfigError("fit_quantizer: empty dimensions");
  if (data.size() != n * d)
    throw ConfigError("fit_quantizer: data size does not match n*d");

  ZQuantizer qz;
  qz.dim = d;
  qz.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) qz.mean[j] += data[i * d + j];
  for (double& m : qz.mean) m /= static_cast<double>(n);

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t a = 0; a < d; ++a) {
      const double ca = data[i * d + a] - qz.mean[a];
      for (std::size_t b = a; b < d; ++b)
        cov[a * d + b] += ca * (data[i * d + b] - qz.mean[b]);
    }
  }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = a; b < d; ++b) {
      cov[a * d + b] /= static_cast<double>(n);
      cov[b * d + a] = cov[a * d + b];
    }

  std::vector<double> eigvec;
  jacobi_eigen(cov, d, eigvec);
  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&cov, d](std::size_t a, std::size_t b) {
    return cov[a * d + a] > cov[b * d + b];
  });

  const std::size_t n_comp = std::min<std::size_t>(2, d);
  qz.components.assign(n_comp * d, 0.0);
  for (std::size_t c = 0; c < n_comp; ++c) {
    const std::size_t col = order[c];
    double peak = 0.0;
    std::size_t peak_at = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double val = std::abs(eigvec[j * d + col]);
      if (val > peak) {
        peak = val;
        peak_at = j;
      }
    }
    const double flip = eigvec[peak_at * d + col] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j)
      qz.components[c * d + j] = flip * eigvec[j * d + col];
  }

  std::vector<double> proj(n);
  for (std::size_t c = 0; c < n_comp; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j)
        s += (data[i * d + j] - qz.mean[j]) * qz.components[c * d + j];
      proj[i] = s;
    }
    qz.centers.push_back(kmeans_1d(proj, bins_per_dim));
  }
  return qz;
}

// ---- discrete information --------------------------------------------------------

namespace {

std::size_t label_cardinality(const std::vector<int>& y) {
  int mx = 0;
  for (const int v : y) {
    if (v < 0) throw DataError("labels must be non-negative");
    mx = std::max(mx, v);
  }
  return static_cast<std::size_t>(mx) + 1;
}

}  // namespace

double discrete_mutual_information(const std::vector<std::size_t>& cells,
                                   std::size_t n_cells,
                                   const std::vector<int>& y) {
  const std::size_t n = cells.size();
  if (n == 0) throw ConfigError("discrete_mutual_information: empty sample");
  if (y.size() != n)
    throw ConfigError("discrete_mutual_information: label size mismatch");
  const std::size_t ny = label_cardinality(y);
  std::vector<double> joint(n_cells * ny, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (cells[i] >= n_cells)
      throw ConfigError("discrete_mutual_information: cell index out of range");
    joint[cells[i] * ny + static_cast<std::size_t>(y[i])] += 1.0;
  }
  std::vector<double> pc(n_cells, 0.0), py(ny, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t c = 0; c < n_cells; ++c)
    for (std::size_t k = 0; k < ny; ++k) {
      joint[c * ny + k] *= inv_n;
      pc[c] += joint[c * ny + k];
      py[k] += joint[c * ny + k];
    }
  double info = 0.0;
  for (std::size_t c = 0; c < n_cells; ++c)
    for (std::size_t k = 0; k < ny; ++k) {
      const double p = joint[c * ny + k];
      if (p > 0.0) info += p * std::log(p / (pc[c] * py[k]));
    }
  return info;
}

double smoothed_cmi(const std::vector<std::size_t>& z_cells, std::size_t nz,
                    const std::vector<std::size_t>& w_cells, std::size_t nw,
                    const std::vector<int>& y, double alpha) {
  const std::size_t n = z_cells.size();
  if (n == 0) throw ConfigError("smoothed_cmi: empty sample");
  if (w_cells.size() != n || y.size() != n)
    throw ConfigError("smoothed_cmi: input sizes mismatch");
  if (!(alpha > 0.0)) throw ConfigError("smoothed_cmi: alpha must be positive");
  const std::size_t ny = label_cardinality(y);

  std::vector<double> joint(nz * nw * ny, alpha);
  for (std::size_t i = 0; i < n; ++i) {
    if (z_cells[i] >= nz || w_cells[i] >= nw)
      throw ConfigError("smoothed_cmi: cell index out of range");
    joint[(z_cells[i] * nw + w_cells[i]) * ny + static_cast<std::size_t>(y[i])] +=
        1.0;
  }
  const double total = static_cast<double>(n) +
                       alpha * static_cast<double>(nz * nw * ny);
  for (double& v : joint) v /= total;

  std::vector<double> pz(nz, 0.0), pzw(nz * nw, 0.0), pzy(nz * ny, 0.0);
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t w = 0; w < nw; ++w)
      for (std::size_t k = 0; k < ny; ++k) {
        const double p = joint[(z * nw + w) * ny + k];
        pz[z] += p;
        pzw[z * nw + w] += p;
        pzy[z * ny + k] += p;
      }
  double cmi = 0.0;
  for (std::size_t z = 0; z < nz; ++z)
    for (std::size_t w = 0; w < nw; ++w)
      for (std::size_t k = 0; k < ny; ++k) {
        const double p = joint[(z * nw + w) * ny + k];
        cmi += p * std::log(p * pz[z] / (pzw[z * nw + w] * pzy[z * ny + k]));
      }
  return cmi;
}

double cmi_probe(const std::vector<double>& z, std::size_t z_dim,
                 const std::vector<double>& pa, std::size_t pa_dim,
                 const std::vector<double>& nd, std::size_t nd_dim,
                 const std::vector<int>& y, std::size_t n,
                 std::size_t bins_per_dim) {
  if (pa.size() != n * pa_dim || nd.size() != n * nd_dim)
    throw ConfigError("cmi_probe: factor block sizes do not match n");
  std::vector<double> w(n * (pa_dim + nd_dim));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(pa.begin() + static_cast<std::ptrdiff_t>(i * pa_dim),
              pa.begin() + static_cast<std::ptrdiff_t>((i + 1) * pa_dim),
              w.begin() + static_cast<std::ptrdiff_t>(i * (pa_dim + nd_dim)));
    std::copy(nd.begin() + static_cast<std::ptrdiff_t>(i * nd_dim),
              nd.begin() + static_cast<std::ptrdiff_t>((i + 1) * nd_dim),
              w.begin() + static_cast<std::ptrdiff_t>(i * (pa_dim + nd_dim) + pa_dim));
  }
  const ZQuantizer qz = fit_quantizer(z, n, z_dim, bins_per_dim);
  const ZQuantizer qw = fit_quantizer(w, n, pa_dim + nd_dim, bins_per_dim);
  return smoothed_cmi(qz.assign(z, n), qz.cells(), qw.assign(w, n), qw.cells(), y);
}

// ---- scaling check ---------------------------------------------------------------

ScalingCheck scaling_check(const ScmConfig& gen_cfg, const ModelState& model,
                           const std::vector<std::size_t>& m_list,
                           std::size_t n_seeds, std::size_t m_ref,
                           std::size_t bins_per_dim) {
  if (m_list.empty()) throw ConfigError("scaling_check: empty m list");
  for (std::size_t i = 1; i < m_list.size(); ++i)
    if (m_list[i] <= m_list[i - 1])
      throw ConfigError("scaling_check: m list must be strictly increasing");
  if (n_seeds == 0) throw ConfigError("scaling_check: needs at least one seed");
  if (m_ref < m_list.back())
    throw ConfigError("scaling_check: reference draw smaller than largest m");

  const auto encode = [&model](const Dataset& ds) {
    return encode_mean(model, full_batch(ds));
  };

  ScmConfig ref_cfg = gen_cfg;
  ref_cfg.n = m_ref;
  ref_cfg.seed = derive_seed(gen_cfg.seed, "scaling-ref");
  const Dataset ref = generate(ref_cfg);
  const std::vector<double> z_ref = encode(ref);
  const ZQuantizer qz =
      fit_quantizer(z_ref, m_ref, model.cfg.z_dim, bins_per_dim);

  ScalingCheck out;
  out.m_list = m_list;
  out.seeds = n_seeds;
  out.ref_info =
      discrete_mutual_information(qz.assign(z_ref, m_ref), qz.cells(), ref.y);

  const std::uint64_t base = derive_seed(gen_cfg.seed, "scaling");
  for (std::size_t mi = 0; mi < m_list.size(); ++mi) {
    std::vector<double> gaps(n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s) {
      ScmConfig draw_cfg = gen_cfg;
      draw_cfg.n = m_list[mi];
      draw_cfg.seed = derive_seed(base, s * m_list.size() + mi);
      const Dataset ds = generate(draw_cfg);
      const double info = discrete_mutual_information(
          qz.assign(encode(ds), ds.n()), qz.cells(), ds.y);
      gaps[s] = std::abs(info - out.ref_info);
    }
    out.median_gap.push_back(quantile(gaps, 0.5));
    out.q25.push_back(quantile(gaps, 0.25));
    out.q75.push_back(quantile(gaps, 0.75));
    out.seed_gaps.push_back(std::move(gaps));
  }

  // Least squares on log gap = c - gamma * log m.
  const std::size_t k = m_list.size();
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double x = std::log(static_cast<double>(m_list[i]));
    const double y = std::log(std::max(out.median_gap[i], 1e-12));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = static_cast<double>(k) * sxx - sx * sx;
  out.gamma = denom != 0.0 ? -((static_cast<double>(k) * sxy - sx * sy) / denom)
                           : 0.0;
  return out;
}

std::string scaling_csv(const ScalingCheck& sc) {
  std::ostringstream os;
  os << "m,median_gap,q25,q75\n";
  char buf[40];
  for (std::size_t i = 0; i < sc.m_list.size(); ++i) {
    os << sc.m_list[i];
    for (const double v : {sc.median_gap[i], sc.q25[i], sc.q75[i]}) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      os << ',' << buf;
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace cari
