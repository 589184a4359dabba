#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cari/errors.hpp"
#include "cari/metrics.hpp"
#include "cari/rng.hpp"
#include "cari/synthgen.hpp"
#include "cari/trainer.hpp"
#include "doctest.h"

using namespace cari;

namespace {

bool params_equal(const ModelState& a, const ModelState& b) {
  const auto pa = a.params(), pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value.size() != pb[i]->value.size()) return false;
    for (std::size_t j = 0; j < pa[i]->value.size(); ++j)
      if (pa[i]->value[j] != pb[i]->value[j]) return false;
  }
  return true;
}

bool breakdown_equal(const LossBreakdown& a, const LossBreakdown& b) {
  return a.nll == b.nll && a.kl == b.kl && a.club == b.club &&
         a.t_pen == b.t_pen && a.total_standard == b.total_standard &&
         a.total_robust == b.total_robust && a.lambda == b.lambda;
}

// Synthetic dataset split into a train slice and a small validation slice.
struct Fixture {
  Dataset train, val;
};

Fixture make_fixture(std::size_t n_train, std::size_t n_val, std::uint64_t seed) {
  ScmConfig gen;
  gen.n = n_train + n_val;
  gen.seed = seed;
  const Dataset all = generate(gen);
  std::vector<std::size_t> idx(all.n());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Fixture f;
  f.train = take(all, {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train)});
  f.val = take(all, {idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end()});
  return f;
}

ModelConfig small_model_config(std::size_t x_dim) {
  ModelConfig mc;
  mc.x_dim = x_dim;
  mc.z_dim = 6;
  mc.hidden = 8;
  return mc;
}

}  // namespace

TEST_CASE("adam: first-step magnitude and zero-gradient decay") {
  std::vector<double> value{1.0, -2.0, 0.5};
  const std::vector<double> grad{10.0, -1e-3, 0.0};
  AdamState st;
  adam_step(value, grad, st, 1e-2);
  CHECK(st.t == 1);
  // First step: m-hat = g, v-hat = g^2, so the update is lr * g / (|g| + eps)
  // -- essentially lr * sign(g), and never larger than lr.
  CHECK(std::abs(value[0] - 1.0) <= 1e-2);
  CHECK(value[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-7));
  CHECK(value[1] == doctest::Approx(-2.0 + 1e-2).epsilon(1e-4));
  CHECK(value[2] == 0.5);  // zero gradient, zero moments: no motion

  // Zero gradients afterwards: parameters hold still while moments decay.
  const std::vector<double> zeros(3, 0.0);
  const std::vector<double> frozen = value;
  const double m0 = st.m[0];
  for (int i = 0; i < 5; ++i) adam_step(value, zeros, st, 1e-2);
  // Momentum keeps pushing while it decays: after k idle steps the drift is
  // about lr * sum 0.9^t / sqrt(0.999^t) per step, a few lr at most.
  CHECK(std::abs(value[0] - frozen[0]) < 5e-2);
  CHECK(std::abs(st.m[0]) == doctest::Approx(m0 * std::pow(0.9, 5)).epsilon(1e-12));
  CHECK(value[2] == 0.5);

  std::vector<double> bad{1.0};
  AdamState st2;
  CHECK_THROWS_AS(adam_step(bad, {1.0, 2.0}, st2, 1e-2), ConfigError);
}

TEST_CASE("adam: deterministic across runs") {
  Rng rng(5);
  std::vector<double> g1(4), g2(4);
  std::vector<double> a{0.1, 0.2, 0.3, 0.4}, b = a;
  AdamState sa, sb;
  for (int step = 0; step < 20; ++step) {
    for (std::size_t i = 0; i < 4; ++i) g1[i] = rng.normal();
    adam_step(a, g1, sa, 1e-3);
  }
  Rng rng2(5);
  for (int step = 0; step < 20; ++step) {
    for (std::size_t i = 0; i < 4; ++i) g2[i] = rng2.normal();
    adam_step(b, g2, sb, 1e-3);
  }
  CHECK(a == b);
  CHECK(sa.m == sb.m);
  CHECK(sa.v == sb.v);
}

TEST_CASE("train config validation") {
  const Fixture f = make_fixture(96, 30, 3);
  TrainConfig cfg;
  cfg.epochs = 1;

  TrainConfig bad = cfg;
  bad.batch_size = 100;
  CHECK_THROWS_AS(train(bad, f.train, f.val, init_model(small_model_config(15), 1)),
                  ConfigError);
  bad = cfg;
  bad.batch_size = 128;  // legal size, but larger than the 96-row split
  CHECK_THROWS_AS(train(bad, f.train, f.val, init_model(small_model_config(15), 1)),
                  ConfigError);
  bad = cfg;
  bad.lr = 0.05;
  CHECK_THROWS_AS(train(bad, f.train, f.val, init_model(small_model_config(15), 1)),
                  ConfigError);
  bad = cfg;
  bad.epochs = 0;
  CHECK_THROWS_AS(train(bad, f.train, f.val, init_model(small_model_config(15), 1)),
                  ConfigError);
  bad = cfg;
  bad.patience = 0;
  CHECK_THROWS_AS(train(bad, f.train, f.val, init_model(small_model_config(15), 1)),
                  ConfigError);
  CHECK_THROWS_AS(train(cfg, Dataset{}, f.val, init_model(small_model_config(15), 1)),
                  ConfigError);
}

TEST_CASE("ablation identity: objective reduced to plain cross-entropy") {
  // KL off, both extra terms off: the trainer must walk the exact same path
  // as a minimal cross-entropy loop sharing only the tensor kernels and the
  // optimizer arithmetic.
  const Fixture f = make_fixture(96, 20, 7);
  const ModelConfig mc = small_model_config(15);
  const ModelState init = init_model(mc, 11);

  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 64;
  cfg.lr = 1e-2;
  cfg.weights.use_kl = false;
  cfg.weights.club_weight = 0.0;
  cfg.weights.t_weight = 0.0;
  cfg.seed = 17;

  // Single-class validation split: AUC is undefined, so the trainer treats
  // every epoch as an improvement and returns the final parameters.
  std::vector<std::size_t> ones;
  for (std::size_t i = 0; i < f.val.n(); ++i)
    if (f.val.y[i] == 1) ones.push_back(i);
  const Dataset val_one_class = take(f.val, ones);

  const TrainResult res = train(cfg, f.train, val_one_class, init);
  CHECK(res.epochs.size() == 4);
  CHECK(res.best_epoch == 4);
  CHECK(std::isnan(res.best_val_auc));

  // The twin loop.
  ModelState twin = init;
  std::vector<Param*> params = twin.params();
  std::vector<AdamState> opt(params.size());
  Rng rng(derive_seed(cfg.seed, "train"));
  std::vector<double> epoch_nll;
  const std::size_t n = f.train.n();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = rng.permutation(n);
    double sum = 0.0;
    std::size_t rows = 0;
    for (std::size_t at = 0; at < n; at += cfg.batch_size) {
      const std::size_t bn = std::min(cfg.batch_size, n - at);
      if (bn < 2) break;
      const Batch b = make_batch(
          f.train, {order.begin() + static_cast<std::ptrdiff_t>(at),
                    order.begin() + static_cast<std::ptrdiff_t>(at + bn)});
      Tape tape;
      const ModelBinding bind = ModelBinding::leaves(tape, twin);
      const EncodeOut eo = encode_fwd(tape, twin, bind, b);
      const Tensor logits = predict_fwd(tape, twin, bind, eo.mu);
      const Tensor loss = softmax_cross_entropy(logits, b.y);
      tape.backward(loss);
      for (std::size_t p = 0; p < params.size(); ++p)
        adam_step(params[p]->value, bind.at(*params[p]).grad(), opt[p], cfg.lr);
      sum += static_cast<double>(bn) * loss.item();
      rows += bn;
    }
    // Multiply by the inverse, matching the trainer's averaging bit for bit.
    epoch_nll.push_back(sum * (1.0 / static_cast<double>(rows)));
  }

  CHECK(params_equal(res.state, twin));
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(res.epochs[e].nll == epoch_nll[e]);
    CHECK(res.epochs[e].kl == 0.0);
    CHECK(res.epochs[e].club == 0.0);
    CHECK(res.epochs[e].t_pen == 0.0);
    CHECK(res.epochs[e].total_standard == res.epochs[e].nll);
    CHECK(res.epochs[e].total_robust == res.epochs[e].nll);
  }
}

TEST_CASE("ablation identity: zero-budget robust training equals standard") {
  const Fixture f = make_fixture(128, 40, 9);
  ModelConfig mc = small_model_config(15);
  mc.prior = PriorKind::ConditionalLabel;
  const ModelState init = init_model(mc, 23);

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  cfg.seed = 29;  // full objective: kl + club + t all active

  TrainConfig robust = cfg;
  robust.mode = TrainMode::Robust;
  robust.attack.beta = 0.0;

  const TrainResult a = train(cfg, f.train, f.val, init);
  const TrainResult b = train(robust, f.train, f.val, init);

  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e)
    CHECK(breakdown_equal(a.epochs[e], b.epochs[e]));
  CHECK(params_equal(a.state, b.state));
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(a.best_val_auc == b.best_val_auc);

  // The recorded best AUC must be reproducible from the returned checkpoint.
  CHECK(clean_metrics(a.state, f.val).auc == a.best_val_auc);
  CHECK(a.val_intervention_effect == b.val_intervention_effect);
}

TEST_CASE("training is deterministic in (seed, config, data)") {
  const Fixture f = make_fixture(96, 24, 13);
  const ModelState init = init_model(small_model_config(15), 31);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.mode = TrainMode::Robust;
  cfg.attack.beta = 0.2;
  cfg.attack.steps = 4;
  cfg.seed = 37;

  const TrainResult a = train(cfg, f.train, f.val, init);
  const TrainResult b = train(cfg, f.train, f.val, init);
  CHECK(params_equal(a.state, b.state));
  REQUIRE(a.epochs.size() == b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e)
    CHECK(breakdown_equal(a.epochs[e], b.epochs[e]));

  TrainConfig other = cfg;
  other.seed = 38;
  const TrainResult c = train(other, f.train, f.val, init);
  CHECK_FALSE(params_equal(a.state, c.state));
}

TEST_CASE("inner search leaves outer parameter gradients untouched") {
  const Fixture f = make_fixture(64, 16, 17);
  const ModelState state = init_model(small_model_config(15), 41);
  const Batch b = full_batch(f.train);

  Tape tape;
  const ModelBinding bind = ModelBinding::leaves(tape, state);
  const std::vector<double> z = encode_mean(state, b);
  std::vector<double> z_bar = intervene_values(state, b);
  for (std::size_t i = 0; i < z_bar.size(); ++i) z_bar[i] += z[i];

  AttackConfig atk;
  atk.beta = 0.5;
  atk.steps = 6;
  const AttackedPair hit = worst_case_pair(state, z, z_bar, b.n, b.y, atk);

  bool moved = false;
  for (std::size_t i = 0; i < hit.z.size(); ++i)
    if (hit.z[i] != z[i]) moved = true;
  CHECK(moved);  // the attack genuinely perturbed something...
  for (const Param* p : state.params())
    for (const double g : bind.at(*p).grad()) CHECK(g == 0.0);  // ...silently
}

TEST_CASE("alternating scheme updates the advertised parameter groups") {
  const Fixture f = make_fixture(128, 20, 19);
  const ModelState init = init_model(small_model_config(15), 43);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  cfg.scheme = UpdateScheme::Alternating;
  cfg.seed = 47;

  // One batch = one optimizer step: only the encoder/predictor group moves.
  const Dataset train_one = take(f.train, [] {
    std::vector<std::size_t> idx(64);
    for (std::size_t i = 0; i < 64; ++i) idx[i] = i;
    return idx;
  }());
  const TrainResult one = train(cfg, train_one, f.val, init);
  CHECK_FALSE(one.state.enc_w1.value == init.enc_w1.value);
  CHECK_FALSE(one.state.pred_w2.value == init.pred_w2.value);
  CHECK(one.state.int_w1.value == init.int_w1.value);
  CHECK(one.state.int_b2.value == init.int_b2.value);

  // Two batches: the second (odd) step reaches the intervention network.
  const TrainResult two = train(cfg, f.train, f.val, init);
  CHECK_FALSE(two.state.int_w1.value == init.int_w1.value);
  CHECK_FALSE(two.state.enc_w1.value == init.enc_w1.value);
}

TEST_CASE("checkpoint round-trip reproduces validation metrics exactly") {
  const Fixture f = make_fixture(96, 32, 21);
  const ModelState init = init_model(small_model_config(15), 53);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 59;
  const TrainResult res = train(cfg, f.train, f.val, init);

  const std::string prefix =
      (std::filesystem::temp_directory_path() / "cari_trainer_ckpt").string();
  save_checkpoint(prefix, res.state);
  const ModelState back = load_checkpoint(prefix);
  CHECK(params_equal(res.state, back));

  const CleanMetrics before = clean_metrics(res.state, f.val);
  const CleanMetrics after = clean_metrics(back, f.val);
  CHECK(before.auc == after.auc);
  CHECK(before.acc == after.acc);
  std::filesystem::remove(prefix + ".json");
  std::filesystem::remove(prefix + ".bin");
}

TEST_CASE("synthetic run: loss falls substantially and logging is complete") {
  ScmConfig gen;
  gen.n = 500;
  gen.seed = 1;
  const Dataset all = generate(gen);
  const SplitResult sp = split(all, 0.64, 0.16, 0.20, 2);

  const ModelState init = init_model(model_config_for(sp.train), 61);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.seed = 67;
  const TrainResult res = train(cfg, sp.train, sp.val, init);

  REQUIRE(!res.epochs.empty());
  REQUIRE(res.best_epoch >= 1);
  const double first = res.epochs.front().nll;
  const double at_best = res.epochs[res.best_epoch - 1].nll;
  // Pilot-calibrated: the full objective trades nll against its information
  // terms, so the drop is smaller than a plain classifier's (measured 0.751
  // at these seeds; 0.78-0.88 across n in {1000,2000,3000}).
  CHECK(at_best <= 0.8 * first);
  CHECK(res.best_val_auc > 0.5);

  // Epoch CSV: header plus one row per epoch, epoch numbers 1-based.
  const std::string csv = epoch_log_csv(res.epochs);
  CHECK(csv.rfind(epoch_csv_header(), 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<std::ptrdiff_t>(res.epochs.size() + 1));
  CHECK(csv.find("\n1,") != std::string::npos);

  // Early stopping respects the patience window.
  CHECK(res.epochs.size() <= cfg.epochs);
  CHECK(res.epochs.size() >= res.best_epoch);
  CHECK(res.epochs.size() - res.best_epoch <= cfg.patience);
}
