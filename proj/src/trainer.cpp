#include "cari/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "cari/errors.hpp"
#include "cari/metrics.hpp"
#include "cari/rng.hpp"

namespace cari {

void validate(const TrainConfig& cfg, std::size_t train_rows) {
  if (train_rows == 0) throw ConfigError("train: empty dataset");
  if (cfg.epochs == 0) throw ConfigError("train: epochs must be positive");
  if (cfg.patience == 0) throw ConfigError("train: patience must be positive");
  const bool bs_ok = cfg.batch_size == 64 || cfg.batch_size == 128 ||
                     cfg.batch_size == 256 || cfg.batch_size == 512 ||
                     cfg.batch_size == 1024;
  if (!bs_ok)
    throw ConfigError("train: batch_size must be one of 64/128/256/512/1024");
  if (cfg.batch_size > train_rows)
    throw ConfigError("train: batch_size exceeds the dataset size");
  if (cfg.lr != 1e-1 && cfg.lr != 1e-2 && cfg.lr != 1e-3 && cfg.lr != 1e-4)
    throw ConfigError("train: lr must be one of 1e-1/1e-2/1e-3/1e-4");
  validate(cfg.weights);
  if (cfg.mode == TrainMode::Robust) {
    validate(cfg.attack);
    if (cfg.attack.beta == 0.0)
      std::cerr << "train: robust mode with a zero attack budget degenerates "
                   "to standard training\n";
  }
}

void adam_step(std::vector<double>& value, const std::vector<double>& grad,
               AdamState& state, double lr) {
  if (value.size() != grad.size())
    throw ConfigError("adam_step: value/grad size mismatch");
  if (state.m.empty()) {
    state.m.assign(value.size(), 0.0);
    state.v.assign(value.size(), 0.0);
  }
  if (state.m.size() != value.size())
    throw ConfigError("adam_step: moment size mismatch");
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  state.t += 1;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < value.size(); ++i) {
    state.m[i] = kBeta1 * state.m[i] + (1.0 - kBeta1) * grad[i];
    state.v[i] = kBeta2 * state.v[i] + (1.0 - kBeta2) * grad[i] * grad[i];
    value[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + kEps);
  }
}

namespace {

std::vector<std::size_t> fixed_shift_perm(std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = (i + 1) % n;
  return perm;
}

bool has_both_classes(const std::vector<int>& y) {
  bool pos = false, neg = false;
  for (const int v : y) (v == 1 ? pos : neg) = true;
  return pos && neg;
}

// One training batch: builds the graph, returns the per-term values actually
// optimized plus the clean-total diagnostic, and leaves the gradients of every
// bound parameter on the tape ready for the optimizer.
LossBreakdown batch_step(const TrainConfig& cfg, const ModelState& state,
                         Tape& tape, const ModelBinding& bind, const Batch& b,
                         Rng& rng, Tensor* total_out) {
  const ObjectiveWeights& w = cfg.weights;
  const std::size_t zd = state.cfg.z_dim;

  const EncodeOut eo = encode_fwd(tape, state, bind, b);
  Tensor z = eo.mu;
  if (w.use_kl) {
    std::vector<double> noise(b.n * zd);
    for (double& v : noise) v = rng.normal();
    z = reparameterize(eo.mu, eo.logvar, tape.leaf(b.n, zd, noise));
  }

  const bool want_club = w.club_weight != 0.0;
  const bool want_t = w.t_weight != 0.0;
  std::optional<Tensor> t, z_bar;
  if (want_club || want_t) t = intervene_fwd(tape, state, bind, b);
  if (want_club) z_bar = add(z, *t);
  std::vector<std::size_t> perm;
  if (want_club)
    perm = cfg.club_perm == ClubPerm::Resample ? rng.permutation(b.n)
                                               : fixed_shift_perm(b.n);

  // Robust mode: search the two worst-case points on detached tapes, then
  // re-enter the graph through constant offsets so the parameters receive
  // gradients evaluated at the attacked points.
  Tensor z_opt = z;
  std::optional<Tensor> z_bar_opt = z_bar;
  if (cfg.mode == TrainMode::Robust) {
    const std::vector<double> z_vals = z.value();
    const std::vector<double> zb_vals =
        z_bar ? z_bar->value() : std::vector<double>(b.n * zd, 0.0);
    const AttackedPair hit =
        worst_case_pair(state, z_vals, zb_vals, b.n, b.y, cfg.attack, &rng);
    std::vector<double> dz(b.n * zd), dzb(b.n * zd);
    for (std::size_t i = 0; i < dz.size(); ++i) {
      dz[i] = hit.z[i] - z_vals[i];
      dzb[i] = hit.z_bar[i] - zb_vals[i];
    }
    z_opt = add(z, tape.leaf(b.n, zd, dz));
    if (z_bar) z_bar_opt = add(*z_bar, tape.leaf(b.n, zd, dzb));
  }

  const VibTerms vib = vib_bound(tape, state, bind, z_opt, eo.mu, eo.logvar, b.y);
  std::optional<Tensor> kl;
  if (w.use_kl) kl = vib.kl;
  std::optional<Tensor> club;
  if (want_club) club = club_upper(tape, state, *z_bar_opt, b.y, perm);
  std::optional<Tensor> t_pen;
  if (want_t) t_pen = t_constraint(*t, w.t_target);

  *total_out = assemble(vib.nll, kl, club, t_pen, w);

  LossBreakdown out;
  out.nll = vib.nll.item();
  out.kl = kl ? kl->item() : 0.0;
  out.club = club ? club->item() : 0.0;
  out.t_pen = t_pen ? t_pen->item() : 0.0;
  out.lambda = w.lambda;
  out.total_robust = total_out->item();
  if (cfg.mode == TrainMode::Robust) {
    // Clean-point diagnostic, forward values only: these nodes are not
    // reachable from the optimized total, so backward never visits them.
    const VibTerms clean = vib_bound(tape, state, bind, z, eo.mu, eo.logvar, b.y);
    const double club_clean =
        want_club ? club_upper(tape, state, *z_bar, b.y, perm).item() : 0.0;
    out.total_standard = assemble_value(clean.nll.item(), out.kl, club_clean,
                                        out.t_pen, w);
  } else {
    out.total_standard = out.total_robust;
  }
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& train_data,
                  const Dataset& val_data, const ModelState& init) {
  const std::size_t n = train_data.n();
  validate(cfg, n);
  validate(init.cfg);

  ModelState state = init;
  std::vector<Param*> params = state.params();
  std::vector<AdamState> opt(params.size());

  const bool val_defined = val_data.n() > 0 && has_both_classes(val_data.y);
  Rng rng(derive_seed(cfg.seed, "train"));

  TrainResult result;
  result.state = state;
  result.best_val_auc = std::numeric_limits<double>::quiet_NaN();
  double best_auc = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0, global_step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = rng.permutation(n);
    LossBreakdown sum;
    std::size_t rows = 0;

    for (std::size_t at = 0; at < n; at += cfg.batch_size) {
      const std::size_t bn = std::min(cfg.batch_size, n - at);
      if (bn < 2) break;  // a single trailing row cannot form a contrast pair
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(at),
                                         order.begin() + static_cast<std::ptrdiff_t>(at + bn));
      const Batch b = make_batch(train_data, idx);

      Tape tape;
      const ModelBinding bind = ModelBinding::leaves(tape, state);
      Tensor total = tape.scalar(0.0);
      const LossBreakdown part = batch_step(cfg, state, tape, bind, b, rng, &total);
      tape.backward(total);

      const bool update_interv = cfg.scheme == UpdateScheme::Joint ||
                                 global_step % 2 == 1;
      const bool update_rest = cfg.scheme == UpdateScheme::Joint ||
                               global_step % 2 == 0;
      for (std::size_t p = 0; p < params.size(); ++p) {
        const bool interv = params[p]->name.rfind("int_", 0) == 0;
        if (interv ? update_interv : update_rest)
          adam_step(params[p]->value, bind.at(*params[p]).grad(), opt[p], cfg.lr);
      }
      ++global_step;

      const double bw = static_cast<double>(bn);
      sum.nll += bw * part.nll;
      sum.kl += bw * part.kl;
      sum.club += bw * part.club;
      sum.t_pen += bw * part.t_pen;
      sum.total_standard += bw * part.total_standard;
      sum.total_robust += bw * part.total_robust;
      rows += bn;
    }

    LossBreakdown row;
    const double inv = 1.0 / static_cast<double>(rows);
    row.nll = sum.nll * inv;
    row.kl = sum.kl * inv;
    row.club = sum.club * inv;
    row.t_pen = sum.t_pen * inv;
    row.total_standard = sum.total_standard * inv;
    row.total_robust = sum.total_robust * inv;
    row.lambda = cfg.weights.lambda;
    result.epochs.push_back(row);

    bool improved = true;
    if (val_defined) {
      const double auc_now = clean_metrics(state, val_data).auc;
      improved = auc_now > best_auc;
      if (improved) best_auc = auc_now;
    }
    if (improved) {
      result.state = state;
      result.best_epoch = epoch;
      if (val_defined) result.best_val_auc = best_auc;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }

  if (val_data.n() > 0) {
    const Batch vb = full_batch(val_data);
    const std::vector<double> z = encode_mean(result.state, vb);
    std::vector<double> z_bar = intervene_values(result.state, vb);
    for (std::size_t i = 0; i < z_bar.size(); ++i) z_bar[i] += z[i];
    result.val_intervention_effect =
        intervention_effect(result.state, z, z_bar, vb.n, vb.y);
  }
  return result;
}

std::string epoch_log_csv(const std::vector<LossBreakdown>& epochs) {
  std::ostringstream os;
  os << epoch_csv_header() << '\n';
  for (std::size_t i = 0; i < epochs.size(); ++i)
    os << epoch_csv_row(i + 1, epochs[i]) << '\n';
  return os.str();
}

}  // namespace cari
