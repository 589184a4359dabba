#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "cari/objective.hpp"
#include "cari/rng.hpp"
#include "doctest.h"

using namespace cari;

namespace {

// Model whose predictor maps the one-hot row e_k (z_dim = K) to the logit row
// logit_rows[k] exactly: the first layer is the identity shifted by +10 into
// the linear region of ELU, the second layer reads the row back off and its
// bias cancels the shift.
ModelState exact_logit_model(const std::vector<std::array<double, 2>>& logit_rows) {
  const std::size_t k = logit_rows.size();
  ModelConfig cfg;
  cfg.id_input = false;
  cfg.x_dim = 1;
  cfg.z_dim = k;
  cfg.hidden = k;
  ModelState st = init_model(cfg, 99);
  std::fill(st.pred_w1.value.begin(), st.pred_w1.value.end(), 0.0);
  for (std::size_t i = 0; i < k; ++i) st.pred_w1.value[i * k + i] = 1.0;
  std::fill(st.pred_b1.value.begin(), st.pred_b1.value.end(), 10.0);
  for (std::size_t i = 0; i < k; ++i) {
    st.pred_w2.value[i * 2 + 0] = logit_rows[i][0];
    st.pred_w2.value[i * 2 + 1] = logit_rows[i][1];
  }
  for (std::size_t c = 0; c < 2; ++c) {
    double colsum = 0.0;
    for (std::size_t i = 0; i < k; ++i) colsum += st.pred_w2.value[i * 2 + c];
    st.pred_b2.value[c] = -10.0 * colsum;
  }
  return st;
}

// One-hot batch: row i is e_{cell[i]} in dimension k.
std::vector<double> one_hot_rows(const std::vector<std::size_t>& cell, std::size_t k) {
  std::vector<double> z(cell.size() * k, 0.0);
  for (std::size_t i = 0; i < cell.size(); ++i) z[i * k + cell[i]] = 1.0;
  return z;
}

double log_prob_pick(double l0, double l1, int pick) {
  // log softmax([l0, l1])[pick], computed the pedestrian way.
  const double mx = std::max(l0, l1);
  const double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
  return (pick == 0 ? l0 : l1) - lse;
}

}  // namespace

TEST_CASE("kl closed form: conditional prior centered on the label is zero") {
  Tape tape;
  const std::vector<int> y = {0, 1, 1, 0};
  const std::size_t d = 3;
  std::vector<double> mu_vals(y.size() * d);
  for (std::size_t i = 0; i < y.size(); ++i)
    std::fill_n(mu_vals.begin() + static_cast<std::ptrdiff_t>(i * d), d,
                static_cast<double>(y[i]));
  Tensor mu = tape.leaf(y.size(), d, std::move(mu_vals));
  Tensor logvar = tape.leaf(y.size(), d, 0.0);
  Tensor kl = kl_closed_form(mu, logvar, PriorKind::ConditionalLabel, y);
  CHECK(kl.item() == 0.0);
}

TEST_CASE("kl closed form: pinned one-dimensional and two-dimensional values") {
  Tape tape;
  // mu=0, y=1, logvar=0, one latent dim, conditional prior:
  // 0.5 * (e^0 + (0-1)^2 - 1 - 0) = 0.5.
  Tensor mu1 = tape.leaf(1, 1, 0.0);
  Tensor lv1 = tape.leaf(1, 1, 0.0);
  CHECK(kl_closed_form(mu1, lv1, PriorKind::ConditionalLabel, {1}).item() == 0.5);

  // Standard prior, mu=(0.3,-0.2), logvar=(0.5,-1):
  // 0.5 * [(e^0.5 + 0.09 - 1.5) + (e^-1 + 0.04)] = 0.32330035593578526.
  Tensor mu2 = tape.leaf(1, 2, std::vector<double>{0.3, -0.2});
  Tensor lv2 = tape.leaf(1, 2, std::vector<double>{0.5, -1.0});
  Tensor kl2 = kl_closed_form(mu2, lv2, PriorKind::Standard, {});
  CHECK(kl2.item() == doctest::Approx(0.32330035593578526).epsilon(1e-14));
}

TEST_CASE("kl closed form: non-negative over random batches and priors") {
  Rng rng(2024);
  for (int rep = 0; rep < 200; ++rep) {
    Tape tape;
    const std::size_t n = 1 + rng.uniform_int(5);
    const std::size_t d = 1 + rng.uniform_int(4);
    std::vector<double> mu_vals(n * d), lv_vals(n * d);
    for (double& v : mu_vals) v = 4.0 * rng.uniform() - 2.0;
    for (double& v : lv_vals) v = 4.0 * rng.uniform() - 2.0;
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.uniform_int(2));
    Tensor mu = tape.leaf(n, d, std::move(mu_vals));
    Tensor lv = tape.leaf(n, d, std::move(lv_vals));
    const PriorKind prior =
        rep % 2 == 0 ? PriorKind::Standard : PriorKind::ConditionalLabel;
    CHECK(kl_closed_form(mu, lv, prior, y).item() >= 0.0);
  }
}

TEST_CASE("kl closed form: gradient matches finite differences") {
  const std::size_t n = 3, d = 2;
  Rng rng(7);
  std::vector<double> x0(2 * n * d);
  for (double& v : x0) v = 2.0 * rng.uniform() - 1.0;
  const std::vector<int> y = {1, 0, 1};
  for (PriorKind prior : {PriorKind::Standard, PriorKind::ConditionalLabel}) {
    auto build = [&](Tape&, const Tensor& x) {
      Tensor mu = reshape(slice_cols(x, 0, n * d), n, d);
      Tensor lv = reshape(slice_cols(x, n * d, n * d), n, d);
      return kl_closed_form(mu, lv, prior, y);
    };
    const GradCheckResult r = gradient_check(build, 1, 2 * n * d, x0);
    CHECK(r.max_rel_err < 1e-6);
  }
}

TEST_CASE("vib bound: zeroed predictor head yields the uniform nll") {
  ModelConfig cfg;
  cfg.x_dim = 3;
  cfg.z_dim = 4;
  cfg.hidden = 5;
  ModelState st = init_model(cfg, 11);
  std::fill(st.pred_w2.value.begin(), st.pred_w2.value.end(), 0.0);

  Tape tape;
  ModelBinding bind = ModelBinding::leaves(tape, st);
  Rng rng(3);
  std::vector<double> zv(6 * cfg.z_dim);
  for (double& v : zv) v = rng.normal();
  Tensor z = tape.leaf(6, cfg.z_dim, std::move(zv));
  Tensor mu = tape.leaf(6, cfg.z_dim, 0.0);
  Tensor lv = tape.leaf(6, cfg.z_dim, 0.0);
  const std::vector<int> y = {0, 1, 0, 1, 1, 0};
  VibTerms terms = vib_bound(tape, st, bind, z, mu, lv, y);
  CHECK(terms.nll.item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(terms.kl.item() == 0.0);
}

TEST_CASE("vib bound: matches an independent straight-line computation") {
  ModelConfig cfg;
  cfg.x_dim = 3;
  cfg.z_dim = 4;
  cfg.hidden = 5;
  ModelState st = init_model(cfg, 21);

  const std::size_t n = 6;
  Rng rng(17);
  Batch batch;
  batch.n = n;
  batch.x.resize(n * cfg.x_dim);
  for (double& v : batch.x) v = 2.0 * rng.uniform() - 1.0;
  batch.y = {1, 0, 0, 1, 1, 0};

  Tape tape;
  ModelBinding bind = ModelBinding::leaves(tape, st);
  EncodeOut enc = encode_fwd(tape, st, bind, batch);
  std::vector<double> noise(n * cfg.z_dim);
  for (double& v : noise) v = rng.normal();
  Tensor z = reparameterize(enc.mu, enc.logvar, tape.leaf(n, cfg.z_dim, noise));
  VibTerms terms = vib_bound(tape, st, bind, z, enc.mu, enc.logvar, batch.y);

  ObjectiveWeights w;
  w.lambda = 7.0;
  w.use_kl = true;
  w.club_weight = 0.0;
  w.t_weight = 0.0;
  Tensor total = assemble(terms.nll, terms.kl, std::nullopt, std::nullopt, w);

  // Independent path: raw loops over the same values.
  const std::vector<double> logits = predict_logits(st, z.value(), n);
  double ce = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    ce -= log_prob_pick(logits[2 * i], logits[2 * i + 1], batch.y[i]);
  ce /= static_cast<double>(n);
  double kl = 0.0;
  const std::vector<double>& muv = enc.mu.value();
  const std::vector<double>& lvv = enc.logvar.value();
  for (std::size_t j = 0; j < n * cfg.z_dim; ++j)
    kl += 0.5 * (std::exp(lvv[j]) + muv[j] * muv[j] - 1.0 - lvv[j]);
  kl /= static_cast<double>(n);

  CHECK(terms.nll.item() == doctest::Approx(ce).epsilon(1e-12));
  CHECK(terms.kl.item() == doctest::Approx(kl).epsilon(1e-12));
  CHECK(total.item() == doctest::Approx(ce + kl / 7.0).epsilon(1e-12));
}

TEST_CASE("club: constant predictor or constant labels give exactly zero") {
  ModelConfig cfg;
  cfg.x_dim = 2;
  cfg.z_dim = 3;
  cfg.hidden = 4;
  ModelState st = init_model(cfg, 5);

  Rng rng(1);
  std::vector<double> zv(8 * cfg.z_dim);
  for (double& v : zv) v = rng.normal();

  SUBCASE("predictor output independent of z") {
    std::fill(st.pred_w2.value.begin(), st.pred_w2.value.end(), 0.0);
    st.pred_b2.value = {0.4, -0.3};
    Tape tape;
    Tensor z_bar = tape.leaf(8, cfg.z_dim, zv);
    const std::vector<int> y = {0, 1, 1, 0, 1, 0, 0, 1};
    Rng perm_rng(77);
    CHECK(club_upper(tape, st, z_bar, y, perm_rng).item() == 0.0);
  }
  SUBCASE("all labels identical") {
    Tape tape;
    Tensor z_bar = tape.leaf(8, cfg.z_dim, zv);
    const std::vector<int> y(8, 1);
    Rng perm_rng(78);
    CHECK(club_upper(tape, st, z_bar, y, perm_rng).item() == 0.0);
  }
}

TEST_CASE("club: four-row batch against a hand computation") {
  // With identity logit rows the second layer is I, so the predictor returns
  // logits equal to any z row inside the linear region, not just one-hots.
  ModelState st = exact_logit_model({{{1.0, 0.0}}, {{0.0, 1.0}}});
  Tape tape;
  const std::vector<double> rows = {2, 0, 0, 1, 1, 3, 0, 0};
  Tensor z_bar = tape.leaf(4, 2, rows);
  const std::vector<int> y = {0, 1, 1, 0};
  const std::vector<std::size_t> perm = {2, 3, 0, 1};

  const double got = club_upper(tape, st, z_bar, y, perm).item();

  // Brute force over the four conditional and four marginal terms.
  double cond = 0.0, marg = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    cond += log_prob_pick(rows[2 * i], rows[2 * i + 1], y[i]);
    marg += log_prob_pick(rows[2 * i], rows[2 * i + 1], y[perm[i]]);
  }
  const double expected = (cond - marg) / 4.0;
  CHECK(got == doctest::Approx(expected).epsilon(1e-13));
  // Same number worked out on paper: the per-row pick differences are the
  // logit gaps (2, -1, -2, 0) negated for the marginal side, averaging 1.25.
  CHECK(got == doctest::Approx(1.25).epsilon(1e-13));
}

TEST_CASE("club: backward reaches the representation, not the head") {
  ModelConfig cfg;
  cfg.x_dim = 3;
  cfg.z_dim = 2;
  cfg.hidden = 4;
  ModelState st = init_model(cfg, 21);
  Rng data_rng(5);
  Batch b;
  b.n = 6;
  b.x.resize(b.n * cfg.x_dim);
  for (double& v : b.x) v = data_rng.normal();
  b.y = {0, 1, 1, 0, 1, 0};

  Tape tape;
  ModelBinding bind = ModelBinding::leaves(tape, st);
  EncodeOut enc = encode_fwd(tape, st, bind, b);
  Rng perm_rng(6);
  Tensor club = club_upper(tape, st, enc.mu, b.y, perm_rng);
  tape.backward(club);

  double enc_abs = 0.0, pred_abs = 0.0;
  for (const Param* p : st.params()) {
    double s = 0.0;
    for (double g : bind.at(*p).grad()) s += std::abs(g);
    if (p->name.rfind("enc_", 0) == 0) enc_abs += s;
    if (p->name.rfind("pred_", 0) == 0) pred_abs += s;
  }
  CHECK(enc_abs > 1e-6);   // the bound shapes the encoder through z_bar
  CHECK(pred_abs == 0.0);  // the head enters as a constant
}

TEST_CASE("club: rng overload consumes exactly one permutation draw") {
  ModelConfig cfg;
  cfg.x_dim = 2;
  cfg.z_dim = 3;
  cfg.hidden = 4;
  ModelState st = init_model(cfg, 12);
  Rng data_rng(9);
  std::vector<double> zv(6 * cfg.z_dim);
  for (double& v : zv) v = data_rng.normal();
  const std::vector<int> y = {0, 1, 0, 1, 1, 0};

  Tape tape;
  Tensor z_bar = tape.leaf(6, cfg.z_dim, zv);

  Rng a(314);
  const double via_rng = club_upper(tape, st, z_bar, y, a).item();

  Rng b(314);
  const std::vector<std::size_t> perm = b.permutation(6);
  const double via_perm = club_upper(tape, st, z_bar, y, perm).item();

  CHECK(via_rng == via_perm);
  // Both generators must now be in the same state.
  CHECK(a.uniform() == b.uniform());
}

TEST_CASE("club: rejects undersized batches and malformed permutations") {
  ModelConfig cfg;
  cfg.x_dim = 2;
  cfg.z_dim = 2;
  cfg.hidden = 2;
  ModelState st = init_model(cfg, 1);
  Tape tape;

  Tensor one_row = tape.leaf(1, 2, std::vector<double>{0.1, 0.2});
  Rng rng(4);
  CHECK_THROWS_AS(club_upper(tape, st, one_row, {1}, rng), ConfigError);

  Tensor two_rows = tape.leaf(2, 2, std::vector<double>{0.1, 0.2, 0.3, 0.4});
  const std::vector<int> y = {0, 1};
  CHECK_THROWS_AS(
      club_upper(tape, st, two_rows, y, std::vector<std::size_t>{0, 0}),
      ConfigError);
  CHECK_THROWS_AS(
      club_upper(tape, st, two_rows, y, std::vector<std::size_t>{0, 2}),
      ConfigError);
  CHECK_THROWS_AS(
      club_upper(tape, st, two_rows, y, std::vector<std::size_t>{0}),
      ConfigError);
}

TEST_CASE("club: upper-bounds the true information on known discrete joints") {
  // Cells are one-hot support points; the predictor reproduces the realized
  // conditional p(y|cell) exactly, which is the regime where the contrastive
  // bound meets the true mutual information from above.
  const std::size_t cells = 4;
  const std::size_t per_cell = 500;
  const std::size_t n = cells * per_cell;

  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(5150, static_cast<std::uint64_t>(trial)));

    // Draw a conditional, then round it onto realized counts.
    std::vector<std::size_t> ones(cells);
    std::vector<double> q(cells);
    for (std::size_t k = 0; k < cells; ++k) {
      const double a = 4.0 * rng.uniform() - 2.0;  // logits in [-2, 2]
      const double p = 1.0 / (1.0 + std::exp(-a));
      ones[k] = static_cast<std::size_t>(
          std::lround(p * static_cast<double>(per_cell)));
      q[k] = static_cast<double>(ones[k]) / static_cast<double>(per_cell);
    }

    std::vector<std::array<double, 2>> logit_rows(cells);
    for (std::size_t k = 0; k < cells; ++k)
      logit_rows[k] = {0.0, std::log(q[k] / (1.0 - q[k]))};
    ModelState st = exact_logit_model(logit_rows);

    std::vector<std::size_t> cell(n);
    std::vector<int> y(n);
    std::size_t at = 0;
    for (std::size_t k = 0; k < cells; ++k)
      for (std::size_t j = 0; j < per_cell; ++j, ++at) {
        cell[at] = k;
        y[at] = j < ones[k] ? 1 : 0;
      }

    // True information of the realized joint, by enumeration.
    double p1 = 0.0;
    for (std::size_t k = 0; k < cells; ++k) p1 += q[k] / static_cast<double>(cells);
    double info = 0.0;
    for (std::size_t k = 0; k < cells; ++k) {
      const double pk = 1.0 / static_cast<double>(cells);
      if (q[k] > 0.0) info += pk * q[k] * std::log(q[k] / p1);
      if (q[k] < 1.0) info += pk * (1.0 - q[k]) * std::log((1.0 - q[k]) / (1.0 - p1));
    }

    Tape tape;
    Tensor z_bar = tape.leaf(n, cells, one_hot_rows(cell, cells));
    const double club = club_upper(tape, st, z_bar, y, rng).item();
    CHECK(club >= info - 0.02);
  }
}

TEST_CASE("t constraint: pinned values and finite-difference gradient") {
  Tape tape;
  const double b = 0.8;
  // Every component at the target magnitude.
  const double root = std::sqrt(b);
  Tensor on_target = tape.leaf(3, 2, root);
  CHECK(t_constraint(on_target, b).item() <= 1e-30);

  // t = 0 scores b^2.
  Tensor zero = tape.leaf(3, 2, 0.0);
  CHECK(t_constraint(zero, b).item() == doctest::Approx(0.64).epsilon(1e-14));

  Rng rng(31);
  std::vector<double> t0(8);
  for (double& v : t0) v = 2.0 * rng.uniform() - 1.0;
  auto build = [&](Tape&, const Tensor& t) { return t_constraint(t, b); };
  const GradCheckResult r = gradient_check(build, 2, 4, t0);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("assemble: weighted sum, ablations, and error paths") {
  ObjectiveWeights w;
  w.lambda = 10.0;
  w.use_kl = true;
  w.club_weight = 1.0;
  w.t_weight = 1.0;

  // 0.7 + 2.0/10 + 0.1 + 0.04 = 1.04.
  CHECK(assemble_value(0.7, 2.0, 0.1, 0.04, w) ==
        doctest::Approx(1.04).epsilon(1e-14));

  SUBCASE("doubling one term doubles its contribution") {
    const double base = assemble_value(0.0, 2.0, 0.1, 0.04, w);
    const double more = assemble_value(0.3, 2.0, 0.1, 0.04, w);
    const double most = assemble_value(0.6, 2.0, 0.1, 0.04, w);
    CHECK(more - base == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(most - base == doctest::Approx(0.6).epsilon(1e-12));
    // And exactly, when the term stands alone.
    ObjectiveWeights alone = w;
    alone.use_kl = false;
    alone.club_weight = 0.0;
    alone.t_weight = 0.0;
    CHECK(assemble_value(0.37, 0, 0, 0, alone) * 2 ==
          assemble_value(0.74, 0, 0, 0, alone));
  }

  SUBCASE("plain cross-entropy ablation returns the nll tensor itself") {
    ObjectiveWeights ce = w;
    ce.use_kl = false;
    ce.club_weight = 0.0;
    ce.t_weight = 0.0;
    Tape tape;
    Tensor nll = tape.scalar(0.42);
    Tensor total = assemble(nll, std::nullopt, std::nullopt, std::nullopt, ce);
    CHECK(total.id() == nll.id());
    CHECK(assemble_value(0.42, 0, 0, 0, ce) == 0.42);
  }

  SUBCASE("no negative term") {
    ObjectiveWeights rc = w;
    rc.club_weight = 0.0;
    CHECK(assemble_value(0.7, 2.0, 123.0, 0.04, rc) ==
          doctest::Approx(0.94).epsilon(1e-14));
  }

  SUBCASE("tensor and value forms agree") {
    Tape tape;
    Tensor nll = tape.scalar(0.7);
    Tensor kl = tape.scalar(2.0);
    Tensor club = tape.scalar(0.1);
    Tensor tp = tape.scalar(0.04);
    Tensor total = assemble(nll, kl, club, tp, w);
    CHECK(total.item() == assemble_value(0.7, 2.0, 0.1, 0.04, w));
  }

  SUBCASE("non-finite participating terms raise the divergence error") {
    const double nan = std::nan("");
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(assemble_value(nan, 0, 0, 0, w), NumericError);
    CHECK_THROWS_AS(assemble_value(0.1, inf, 0, 0, w), NumericError);
    // A structurally skipped term may hold garbage without tripping the check.
    ObjectiveWeights skip = w;
    skip.club_weight = 0.0;
    CHECK(assemble_value(0.1, 0.2, nan, 0.3, skip) ==
          doctest::Approx(0.1 + 0.02 + 0.3).epsilon(1e-14));
  }

  SUBCASE("missing required tensor terms are a configuration error") {
    Tape tape;
    Tensor nll = tape.scalar(0.5);
    CHECK_THROWS_AS(assemble(nll, std::nullopt, std::nullopt, std::nullopt, w),
                    ConfigError);
  }

  SUBCASE("invalid weights are rejected") {
    ObjectiveWeights bad = w;
    bad.lambda = 0.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = w;
    bad.club_weight = -1.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
  }
}

TEST_CASE("epoch csv format is pinned") {
  CHECK(epoch_csv_header() ==
        "epoch,nll,kl,club,t_pen,total_standard,total_robust,lambda");
  LossBreakdown b;
  b.nll = 0.5;
  b.kl = 1.25;
  b.club = 0.0;
  b.t_pen = 0.0625;
  b.total_standard = 0.6875;
  b.total_robust = 0.6875;
  b.lambda = 10.0;
  CHECK(epoch_csv_row(3, b) == "3,0.5,1.25,0,0.0625,0.6875,0.6875,10");
}

TEST_CASE("mi proxy and intervention effect: trivial zeros") {
  ModelConfig cfg;
  cfg.x_dim = 2;
  cfg.z_dim = 3;
  cfg.hidden = 4;
  ModelState st = init_model(cfg, 8);

  Rng rng(2);
  const std::size_t n = 10;
  std::vector<double> z(n * cfg.z_dim), z2(n * cfg.z_dim);
  for (double& v : z) v = rng.normal();
  for (double& v : z2) v = rng.normal();
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % 2);

  SUBCASE("identical inputs") {
    CHECK(intervention_effect(st, z, z, n, y) == 0.0);
  }
  SUBCASE("predictor ignores its input") {
    std::fill(st.pred_w2.value.begin(), st.pred_w2.value.end(), 0.0);
    // Balanced labels: H(Y) = ln 2 = CE of the uniform predictor.
    CHECK(std::abs(mi_proxy(st, z, n, y)) < 1e-14);
    CHECK(intervention_effect(st, z, z2, n, y) == 0.0);
  }
}

TEST_CASE("intervention effect: matches enumeration on a discrete joint") {
  // Two one-hot cells, 100 rows each; 80 and 20 positives, so the overall
  // label marginal is exactly balanced.  The predictor reproduces the
  // conditional, making the cross-entropy proxy coincide with the true
  // information of the joint.
  const double l4 = std::log(4.0);
  ModelState st = exact_logit_model({{{0.0, l4}}, {{0.0, -l4}}});

  const std::size_t per_cell = 100;
  const std::size_t n = 2 * per_cell;
  std::vector<std::size_t> cell(n);
  std::vector<int> y(n);
  for (std::size_t j = 0; j < per_cell; ++j) {
    cell[j] = 0;
    y[j] = j < 80 ? 1 : 0;
    cell[per_cell + j] = 1;
    y[per_cell + j] = j < 20 ? 1 : 0;
  }
  const std::vector<double> z = one_hot_rows(cell, 2);
  // A collapsed alternative: every row at the origin.  The predictor emits
  // exactly (0, 0) there, the true conditional of the balanced marginal.
  const std::vector<double> z_flat(n * 2, 0.0);

  double info = 0.0;
  for (const double q : {0.8, 0.2})
    info += 0.5 * (q * std::log(q / 0.5) + (1.0 - q) * std::log((1.0 - q) / 0.5));

  CHECK(std::abs(mi_proxy(st, z_flat, n, y)) < 1e-13);
  const double effect = intervention_effect(st, z, z_flat, n, y);
  CHECK(effect == doctest::Approx(info).epsilon(1e-6));
}
