#include "cari/attack.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "cari/errors.hpp"

namespace cari {

void validate(const AttackConfig& cfg) {
  if (!(std::isfinite(cfg.beta) && cfg.beta >= 0.0))
    throw ConfigError("attack: beta must be finite and >= 0");
  if (cfg.steps < 1) throw ConfigError("attack: steps must be >= 1");
  if (!std::isfinite(cfg.step_size) || cfg.step_size < 0.0)
    throw ConfigError("attack: step_size must be finite and >= 0");
  if (cfg.beta > 0.0 && resolved_step_size(cfg) <= 0.0)
    throw ConfigError("attack: step size resolves to zero for a positive beta");
}

double resolved_step_size(const AttackConfig& cfg) {
  if (cfg.step_size > 0.0) return cfg.step_size;
  return 2.5 * cfg.beta / static_cast<double>(cfg.steps);
}

namespace {

double row_norm2(const double* v, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) s += v[j] * v[j];
  return std::sqrt(s);
}

// Project row r of z onto the ball of radius beta around the same row of z0.
void project_row(double* z, const double* z0, std::size_t d, AttackNorm norm,
                 double beta) {
  if (norm == AttackNorm::Infinity) {
    for (std::size_t j = 0; j < d; ++j)
      z[j] = std::clamp(z[j], z0[j] - beta, z0[j] + beta);
    return;
  }
  std::vector<double> delta(d);
  for (std::size_t j = 0; j < d; ++j) delta[j] = z[j] - z0[j];
  const double dn = row_norm2(delta.data(), d);
  if (dn > beta) {
    const double scale = beta / dn;
    for (std::size_t j = 0; j < d; ++j) z[j] = z0[j] + delta[j] * scale;
  }
}

// Uniform draw inside the ball around z0, written over z.
void random_start_in_ball(double* z, const double* z0, std::size_t d,
                          AttackNorm norm, double beta, Rng& rng) {
  if (norm == AttackNorm::Infinity) {
    for (std::size_t j = 0; j < d; ++j)
      z[j] = z0[j] + beta * (2.0 * rng.uniform() - 1.0);
    return;
  }
  std::vector<double> dir(d);
  for (std::size_t j = 0; j < d; ++j) dir[j] = rng.normal();
  const double dn = row_norm2(dir.data(), d);
  const double radius =
      beta * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
  if (dn > 0.0)
    for (std::size_t j = 0; j < d; ++j) z[j] = z0[j] + dir[j] * (radius / dn);
  else
    std::copy(z0, z0 + d, z);
}

// Evaluates the per-row losses at z; fills grad (n*d) as well when wanted.
std::vector<double> eval_rows(const RowLossFn& row_loss,
                              const std::vector<double>& z, std::size_t n,
                              std::size_t d, std::vector<double>* grad) {
  Tape tape;
  Tensor zt = tape.leaf(n, d, z);
  Tensor rows = row_loss(tape, zt);
  if (rows.rows() != n || rows.cols() != 1)
    throw ConfigError("pgd: row loss must return one value per input row");
  const std::vector<double> vals = rows.value();
  if (grad) {
    tape.backward(mean_all(rows));
    *grad = zt.grad();
  }
  return vals;
}

}  // namespace

std::vector<double> pgd(const std::vector<double>& z0, std::size_t n,
                        std::size_t d, const RowLossFn& row_loss,
                        const AttackConfig& cfg, Rng* rng) {
  validate(cfg);
  if (n == 0 || d == 0) throw ConfigError("pgd: empty batch");
  if (z0.size() != n * d)
    throw ConfigError("pgd: z0 size does not match n*d");
  if (cfg.random_start && rng == nullptr)
    throw ConfigError("pgd: random_start needs a generator");
  if (cfg.beta == 0.0) return z0;

  const double alpha = resolved_step_size(cfg);
  const double sign = cfg.direction == AttackDirection::MinimizeMI ? 1.0 : -1.0;
  // "More adversarial" means a larger signed loss.
  const auto adv = [sign](double loss) { return sign * loss; };

  std::vector<double> best_z = z0;
  std::vector<double> best_val = eval_rows(row_loss, z0, n, d, nullptr);

  std::vector<double> z = z0;
  if (cfg.random_start) {
    for (std::size_t r = 0; r < n; ++r)
      random_start_in_ball(&z[r * d], &z0[r * d], d, cfg.norm, cfg.beta, *rng);
  }

  std::vector<double> grad;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::vector<double> vals = eval_rows(row_loss, z, n, d, &grad);
    for (std::size_t r = 0; r < n; ++r) {
      if (adv(vals[r]) > adv(best_val[r])) {
        best_val[r] = vals[r];
        std::copy(z.begin() + static_cast<std::ptrdiff_t>(r * d),
                  z.begin() + static_cast<std::ptrdiff_t>((r + 1) * d),
                  best_z.begin() + static_cast<std::ptrdiff_t>(r * d));
      }
    }
    if (step == 0 && !cfg.random_start &&
        std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; })) {
      std::cerr << "pgd: zero gradient at the start point; batch left unattacked\n";
      return z0;
    }
    for (std::size_t r = 0; r < n; ++r) {
      double* zr = &z[r * d];
      const double* gr = &grad[r * d];
      if (cfg.norm == AttackNorm::Infinity) {
        for (std::size_t j = 0; j < d; ++j) {
          const double s = gr[j] > 0.0 ? 1.0 : (gr[j] < 0.0 ? -1.0 : 0.0);
          zr[j] += sign * alpha * s;
        }
      } else {
        const double gn = row_norm2(gr, d);
        if (gn > 0.0)
          for (std::size_t j = 0; j < d; ++j)
            zr[j] += sign * alpha * gr[j] / gn;
      }
      project_row(zr, &z0[r * d], d, cfg.norm, cfg.beta);
    }
  }

  const std::vector<double> vals = eval_rows(row_loss, z, n, d, nullptr);
  for (std::size_t r = 0; r < n; ++r) {
    if (adv(vals[r]) > adv(best_val[r])) {
      best_val[r] = vals[r];
      std::copy(z.begin() + static_cast<std::ptrdiff_t>(r * d),
                z.begin() + static_cast<std::ptrdiff_t>((r + 1) * d),
                best_z.begin() + static_cast<std::ptrdiff_t>(r * d));
    }
  }
  return best_z;
}

RowLossFn row_cross_entropy_fn(const ModelState& state, const std::vector<int>& y) {
  return [&state, y](Tape& tape, const Tensor& z) {
    ModelBinding bind = ModelBinding::leaves(tape, state);
    Tensor logits = predict_fwd(tape, state, bind, z);
    return mul_scalar(pick_log_softmax(logits, y), -1.0);
  };
}

AttackedPair worst_case_pair(const ModelState& state, const std::vector<double>& z,
                             const std::vector<double>& z_bar, std::size_t n,
                             const std::vector<int>& y, const AttackConfig& cfg,
                             Rng* rng) {
  const RowLossFn ce = row_cross_entropy_fn(state, y);
  AttackConfig weaken = cfg;
  weaken.direction = AttackDirection::MinimizeMI;
  AttackConfig strengthen = cfg;
  strengthen.direction = AttackDirection::MaximizeMI;
  AttackedPair out;
  out.z = pgd(z, n, state.cfg.z_dim, ce, weaken, rng);
  out.z_bar = pgd(z_bar, n, state.cfg.z_dim, ce, strengthen, rng);
  return out;
}

}  // namespace cari
