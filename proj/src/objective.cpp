#include "cari/objective.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "cari/errors.hpp"

namespace cari {

void validate(const ObjectiveWeights& w) {
  if (!(std::isfinite(w.lambda) && w.lambda > 0.0))
    throw ConfigError("objective: lambda must be finite and > 0");
  if (!(std::isfinite(w.club_weight) && w.club_weight >= 0.0))
    throw ConfigError("objective: club_weight must be finite and >= 0");
  if (!(std::isfinite(w.t_weight) && w.t_weight >= 0.0))
    throw ConfigError("objective: t_weight must be finite and >= 0");
  if (!(std::isfinite(w.t_target) && w.t_target >= 0.0))
    throw ConfigError("objective: t_target must be finite and >= 0");
}

namespace {

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string epoch_csv_header() {
  return "epoch,nll,kl,club,t_pen,total_standard,total_robust,lambda";
}

std::string epoch_csv_row(std::size_t epoch, const LossBreakdown& b) {
  std::ostringstream os;
  os << epoch << ',' << fmt_g17(b.nll) << ',' << fmt_g17(b.kl) << ','
     << fmt_g17(b.club) << ',' << fmt_g17(b.t_pen) << ','
     << fmt_g17(b.total_standard) << ',' << fmt_g17(b.total_robust) << ','
     << fmt_g17(b.lambda);
  return os.str();
}

Tensor kl_closed_form(const Tensor& mu, const Tensor& logvar, PriorKind prior,
                      const std::vector<int>& y) {
  if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols())
    throw ConfigError("kl_closed_form: mu and logvar shapes differ");
  const std::size_t n = mu.rows();
  const std::size_t d = mu.cols();
  if (n == 0) throw ConfigError("kl_closed_form: empty batch");
  Tensor centered = mu;
  if (prior == PriorKind::ConditionalLabel) {
    if (y.size() != n)
      throw ConfigError("kl_closed_form: label count does not match batch");
    std::vector<double> m(n * d);
    for (std::size_t i = 0; i < n; ++i)
      std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                  static_cast<double>(y[i]));
    centered = sub(mu, mu.tape()->leaf(n, d, std::move(m)));
  }
  Tensor sq = mul(centered, centered);
  Tensor ev = exp_elem(logvar);
  Tensor per_elem = sub(add_scalar(add(ev, sq), -1.0), logvar);
  return mul_scalar(sum_all(per_elem), 0.5 / static_cast<double>(n));
}

VibTerms vib_bound(Tape& tape, const ModelState& state, const ModelBinding& bind,
                   const Tensor& z, const Tensor& mu, const Tensor& logvar,
                   const std::vector<int>& y) {
  Tensor logits = predict_fwd(tape, state, bind, z);
  VibTerms out;
  out.nll = softmax_cross_entropy(logits, y);
  out.kl = kl_closed_form(mu, logvar, state.cfg.prior, y);
  return out;
}

Tensor club_upper(Tape& tape, const ModelState& state, const Tensor& z_bar,
                  const std::vector<int>& y,
                  const std::vector<std::size_t>& perm) {
  const std::size_t n = z_bar.rows();
  if (n < 2) throw ConfigError("club_upper: needs a batch of at least 2 rows");
  if (y.size() != n)
    throw ConfigError("club_upper: label count does not match batch");
  if (perm.size() != n)
    throw ConfigError("club_upper: permutation size does not match batch");
  std::vector<char> seen(n, 0);
  for (std::size_t p : perm) {
    if (p >= n || seen[p])
      throw ConfigError("club_upper: perm is not a permutation of 0..n-1");
    seen[p] = 1;
  }
  std::vector<int> y_marginal(n);
  for (std::size_t i = 0; i < n; ++i) y_marginal[i] = y[perm[i]];

  // Fresh leaves detach the head: their gradients are never read back, so the
  // bound's pressure lands entirely on the z_bar path.
  const ModelBinding frozen = ModelBinding::leaves(tape, state);
  Tensor logits = predict_fwd(tape, state, frozen, z_bar);
  Tensor conditional = mean_all(pick_log_softmax(logits, y));
  Tensor marginal = mean_all(pick_log_softmax(logits, y_marginal));
  return sub(conditional, marginal);
}

Tensor club_upper(Tape& tape, const ModelState& state, const Tensor& z_bar,
                  const std::vector<int>& y, Rng& rng) {
  return club_upper(tape, state, z_bar, y, rng.permutation(z_bar.rows()));
}

Tensor t_constraint(const Tensor& t, double target) {
  Tensor sq = mul(t, t);
  Tensor dev = add_scalar(sq, -target);
  return mean_all(mul(dev, dev));
}

double assemble_value(double nll, double kl, double club, double t_pen,
                      const ObjectiveWeights& w) {
  validate(w);
  double total = nll;
  bool finite = std::isfinite(nll);
  if (w.use_kl) {
    total += kl / w.lambda;
    finite = finite && std::isfinite(kl);
  }
  if (w.club_weight != 0.0) {
    total += w.club_weight * club;
    finite = finite && std::isfinite(club);
  }
  if (w.t_weight != 0.0) {
    total += w.t_weight * t_pen;
    finite = finite && std::isfinite(t_pen);
  }
  if (!finite || !std::isfinite(total)) {
    std::ostringstream os;
    os << "objective diverged: nll=" << nll << " kl=" << kl << " club=" << club
       << " t_pen=" << t_pen << " lambda=" << w.lambda;
    throw NumericError(os.str());
  }
  return total;
}

Tensor assemble(const Tensor& nll, const std::optional<Tensor>& kl,
                const std::optional<Tensor>& club,
                const std::optional<Tensor>& t_pen, const ObjectiveWeights& w) {
  validate(w);
  if (w.use_kl && !kl)
    throw ConfigError("assemble: kl term required when use_kl is set");
  if (w.club_weight != 0.0 && !club)
    throw ConfigError("assemble: club term required for nonzero club_weight");
  if (w.t_weight != 0.0 && !t_pen)
    throw ConfigError("assemble: t term required for nonzero t_weight");
  // Validates finiteness of every participating term (throws NumericError).
  assemble_value(nll.item(), w.use_kl ? kl->item() : 0.0,
                 w.club_weight != 0.0 ? club->item() : 0.0,
                 w.t_weight != 0.0 ? t_pen->item() : 0.0, w);

  Tensor total = nll;
  if (w.use_kl) total = add(total, mul_scalar(*kl, 1.0 / w.lambda));
  if (w.club_weight != 0.0) total = add(total, mul_scalar(*club, w.club_weight));
  if (w.t_weight != 0.0) total = add(total, mul_scalar(*t_pen, w.t_weight));
  return total;
}

double mean_cross_entropy(const std::vector<double>& logits, std::size_t n,
                          std::size_t classes, const std::vector<int>& y) {
  if (n == 0 || classes == 0)
    throw ConfigError("mean_cross_entropy: empty batch or no classes");
  if (logits.size() != n * classes)
    throw ConfigError("mean_cross_entropy: logits size does not match n*classes");
  if (y.size() != n)
    throw ConfigError("mean_cross_entropy: label count does not match batch");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * classes;
    double mx = row[0];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(row[c] - mx);
    const double lse = mx + std::log(sum);
    const int label = y[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes)
      throw DataError("mean_cross_entropy: label out of range");
    total += lse - row[static_cast<std::size_t>(label)];
  }
  return total / static_cast<double>(n);
}

double label_entropy(const std::vector<int>& y, std::size_t classes) {
  if (y.empty()) throw ConfigError("label_entropy: empty batch");
  if (classes == 0) throw ConfigError("label_entropy: no classes");
  std::vector<double> counts(classes, 0.0);
  for (int v : y) {
    if (v < 0 || static_cast<std::size_t>(v) >= classes)
      throw DataError("label_entropy: label out of range");
    counts[static_cast<std::size_t>(v)] += 1.0;
  }
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / static_cast<double>(y.size());
      h -= p * std::log(p);
    }
  }
  return h;
}

double mi_proxy(const ModelState& state, const std::vector<double>& z,
                std::size_t n, const std::vector<int>& y) {
  const std::vector<double> logits = predict_logits(state, z, n);
  return label_entropy(y, 2) - mean_cross_entropy(logits, n, 2, y);
}

double intervention_effect(const ModelState& state, const std::vector<double>& z,
                           const std::vector<double>& z_bar, std::size_t n,
                           const std::vector<int>& y) {
  return mi_proxy(state, z, n, y) - mi_proxy(state, z_bar, n, y);
}

}  // namespace cari
