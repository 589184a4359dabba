#include "cari/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cari/errors.hpp"
#include "cari/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cari {

namespace {

// ---- name tables ----------------------------------------------------------------

std::string mode_name(TrainMode m) {
  return m == TrainMode::Robust ? "robust" : "standard";
}

TrainMode mode_from_name(const std::string& s) {
  if (s == "standard") return TrainMode::Standard;
  if (s == "robust") return TrainMode::Robust;
  throw ConfigError("unknown mode '" + s + "' (standard | robust)");
}

std::string norm_name(AttackNorm n) {
  return n == AttackNorm::Two ? "2" : "inf";
}

AttackNorm norm_from_name(const std::string& s) {
  if (s == "2") return AttackNorm::Two;
  if (s == "inf") return AttackNorm::Infinity;
  throw ConfigError("unknown attack norm '" + s + "' (2 | inf)");
}

std::string perm_name(ClubPerm p) {
  return p == ClubPerm::FixedShift ? "fixed-shift" : "resample";
}

ClubPerm perm_from_name(const std::string& s) {
  if (s == "resample") return ClubPerm::Resample;
  if (s == "fixed-shift") return ClubPerm::FixedShift;
  throw ConfigError("unknown contrast permutation '" + s +
                    "' (resample | fixed-shift)");
}

std::string scheme_name(UpdateScheme u) {
  return u == UpdateScheme::Alternating ? "alternating" : "joint";
}

UpdateScheme scheme_from_name(const std::string& s) {
  if (s == "joint") return UpdateScheme::Joint;
  if (s == "alternating") return UpdateScheme::Alternating;
  throw ConfigError("unknown update scheme '" + s + "' (joint | alternating)");
}

std::string label_rule_name(LabelRule r) {
  return r == LabelRule::PreSigmoidSum ? "pre-sigmoid-sum" : "sigma-mean";
}

LabelRule label_rule_from_name(const std::string& s) {
  if (s == "sigma-mean") return LabelRule::SigmaMean;
  if (s == "pre-sigmoid-sum") return LabelRule::PreSigmoidSum;
  throw ConfigError("unknown label rule '" + s +
                    "' (sigma-mean | pre-sigmoid-sum)");
}

std::string csv_kind_name(Dataset::Kind k) {
  switch (k) {
    case Dataset::Kind::Factor: return "factor";
    case Dataset::Kind::IdRating: return "id-rating";
    case Dataset::Kind::Feature: return "feature-rating";
  }
  throw ConfigError("unhandled csv kind");
}

Dataset::Kind csv_kind_from_name(const std::string& s) {
  if (s == "factor") return Dataset::Kind::Factor;
  if (s == "id-rating") return Dataset::Kind::IdRating;
  if (s == "feature-rating") return Dataset::Kind::Feature;
  throw ConfigError("unknown csv kind '" + s +
                    "' (factor | id-rating | feature-rating)");
}

// ---- small file / format helpers --------------------------------------------------

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os << text;
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void append_csv(const fs::path& path, const std::string& header,
                const std::string& rows) {
  const bool fresh = !fs::exists(path);
  std::ofstream os(path, std::ios::binary | std::ios::app);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  if (fresh) os << header << '\n';
  os << rows;
  os.flush();
  if (!os) throw DataError("write failed: " + path.string());
}

// ---- strict JSON readers ----------------------------------------------------------

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("config: unknown key '" + item.key() + "' in '" +
                        where + "'");
  }
}

AttackConfig attack_from_json(const json& j, const std::string& where) {
  expect_keys(j, where, {"norm", "beta", "steps", "step_size", "random_start"});
  AttackConfig a;
  if (j.contains("norm")) a.norm = norm_from_name(j.at("norm").get<std::string>());
  if (j.contains("beta")) a.beta = j.at("beta").get<double>();
  if (j.contains("steps")) a.steps = j.at("steps").get<std::size_t>();
  if (j.contains("step_size")) a.step_size = j.at("step_size").get<double>();
  if (j.contains("random_start")) a.random_start = j.at("random_start").get<bool>();
  return a;
}

json attack_to_json(const AttackConfig& a) {
  return json{{"norm", norm_name(a.norm)},
              {"beta", a.beta},
              {"steps", a.steps},
              {"step_size", a.step_size},
              {"random_start", a.random_start}};
}

}  // namespace

// ---- method presets ---------------------------------------------------------------

Method method_from_name(const std::string& name) {
  if (name == "base") return Method::Base;
  if (name == "ib") return Method::Ib;
  if (name == "r-cvae") return Method::RCvae;
  if (name == "cari") return Method::Cari;
  throw ConfigError("unknown method '" + name + "' (base | ib | r-cvae | cari)");
}

std::string method_name(Method m) {
  switch (m) {
    case Method::Base: return "base";
    case Method::Ib: return "ib";
    case Method::RCvae: return "r-cvae";
    case Method::Cari: return "cari";
  }
  throw ConfigError("unhandled method");
}

// ---- config parsing ----------------------------------------------------------------

ExperimentConfig experiment_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    expect_keys(j, "config",
                {"seed", "data_seed", "split_seed", "model_seed", "train_seed",
                 "method", "dataset", "split", "model", "train", "eval", "out",
                 "scaling", "sweep"});
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("data_seed"))
      cfg.data_seed = j.at("data_seed").get<std::uint64_t>();
    if (j.contains("split_seed"))
      cfg.split_seed = j.at("split_seed").get<std::uint64_t>();
    if (j.contains("model_seed"))
      cfg.model_seed = j.at("model_seed").get<std::uint64_t>();
    if (j.contains("train_seed"))
      cfg.train_seed = j.at("train_seed").get<std::uint64_t>();
    if (j.contains("method"))
      cfg.method = method_from_name(j.at("method").get<std::string>());
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();

    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      expect_keys(d, "dataset", {"synthetic", "csv"});
      if (d.contains("synthetic") == d.contains("csv"))
        throw ConfigError(
            "config: 'dataset' needs exactly one of 'synthetic' or 'csv'");
      if (d.contains("synthetic")) {
        const json& s = d.at("synthetic");
        expect_keys(s, "dataset.synthetic",
                    {"n", "beta", "q", "d1", "d2", "d3", "mixing_seed",
                     "label_rule"});
        cfg.dataset.synthetic = true;
        ScmConfig& g = cfg.dataset.scm;
        if (s.contains("n")) g.n = s.at("n").get<std::size_t>();
        if (s.contains("beta")) g.beta = s.at("beta").get<double>();
        if (s.contains("q")) g.q = s.at("q").get<double>();
        if (s.contains("d1")) g.d1 = s.at("d1").get<std::size_t>();
        if (s.contains("d2")) g.d2 = s.at("d2").get<std::size_t>();
        if (s.contains("d3")) g.d3 = s.at("d3").get<std::size_t>();
        if (s.contains("mixing_seed"))
          g.mixing_seed = s.at("mixing_seed").get<std::uint64_t>();
        if (s.contains("label_rule"))
          g.label_rule =
              label_rule_from_name(s.at("label_rule").get<std::string>());
      } else {
        const json& c = d.at("csv");
        expect_keys(c, "dataset.csv", {"path", "kind", "label_threshold"});
        cfg.dataset.synthetic = false;
        cfg.dataset.csv_path = c.at("path").get<std::string>();
        if (c.contains("kind"))
          cfg.dataset.csv_kind =
              csv_kind_from_name(c.at("kind").get<std::string>());
        if (c.contains("label_threshold"))
          cfg.dataset.label_threshold = c.at("label_threshold").get<double>();
      }
    }

    if (j.contains("split")) {
      const json& s = j.at("split");
      expect_keys(s, "split", {"train", "val", "test"});
      if (s.contains("train")) cfg.split.train = s.at("train").get<double>();
      if (s.contains("val")) cfg.split.val = s.at("val").get<double>();
      if (s.contains("test")) cfg.split.test = s.at("test").get<double>();
    }

    if (j.contains("model")) {
      const json& m = j.at("model");
      expect_keys(m, "model", {"z_dim", "hidden", "embed_dim"});
      if (m.contains("z_dim")) cfg.z_dim = m.at("z_dim").get<std::size_t>();
      if (m.contains("hidden")) cfg.hidden = m.at("hidden").get<std::size_t>();
      if (m.contains("embed_dim"))
        cfg.embed_dim = m.at("embed_dim").get<std::size_t>();
    }

    if (j.contains("train")) {
      const json& t = j.at("train");
      expect_keys(t, "train",
                  {"mode", "epochs", "batch_size", "lr", "patience",
                   "club_perm", "scheme", "weights", "attack"});
      TrainConfig& tc = cfg.train;
      if (t.contains("mode"))
        tc.mode = mode_from_name(t.at("mode").get<std::string>());
      if (t.contains("epochs")) tc.epochs = t.at("epochs").get<std::size_t>();
      if (t.contains("batch_size"))
        tc.batch_size = t.at("batch_size").get<std::size_t>();
      if (t.contains("lr")) tc.lr = t.at("lr").get<double>();
      if (t.contains("patience"))
        tc.patience = t.at("patience").get<std::size_t>();
      if (t.contains("club_perm"))
        tc.club_perm = perm_from_name(t.at("club_perm").get<std::string>());
      if (t.contains("scheme"))
        tc.scheme = scheme_from_name(t.at("scheme").get<std::string>());
      if (t.contains("weights")) {
        const json& w = t.at("weights");
        expect_keys(w, "train.weights",
                    {"lambda", "use_kl", "club_weight", "t_weight", "t_target"});
        if (w.contains("lambda"))
          tc.weights.lambda = w.at("lambda").get<double>();
        if (w.contains("use_kl"))
          tc.weights.use_kl = w.at("use_kl").get<bool>();
        if (w.contains("club_weight"))
          tc.weights.club_weight = w.at("club_weight").get<double>();
        if (w.contains("t_weight"))
          tc.weights.t_weight = w.at("t_weight").get<double>();
        if (w.contains("t_target"))
          tc.weights.t_target = w.at("t_target").get<double>();
      }
      if (t.contains("attack"))
        tc.attack = attack_from_json(t.at("attack"), "train.attack");
    }

    if (j.contains("eval")) {
      const json& e = j.at("eval");
      if (!e.is_array()) throw ConfigError("config: 'eval' must be an array");
      cfg.eval.clear();
      for (std::size_t i = 0; i < e.size(); ++i)
        cfg.eval.push_back(
            attack_from_json(e[i], "eval[" + std::to_string(i) + "]"));
    }

    if (j.contains("scaling")) {
      const json& s = j.at("scaling");
      expect_keys(s, "scaling", {"m_list", "seeds", "m_ref", "bins_per_dim"});
      if (s.contains("m_list"))
        cfg.scaling_m = s.at("m_list").get<std::vector<std::size_t>>();
      if (s.contains("seeds"))
        cfg.scaling_seeds = s.at("seeds").get<std::size_t>();
      if (s.contains("m_ref"))
        cfg.scaling_m_ref = s.at("m_ref").get<std::size_t>();
      if (s.contains("bins_per_dim"))
        cfg.scaling_bins = s.at("bins_per_dim").get<std::size_t>();
    }

    if (j.contains("sweep")) {
      const json& s = j.at("sweep");
      expect_keys(s, "sweep", {"seeds", "methods", "betas", "workers"});
      if (s.contains("seeds"))
        cfg.sweep_seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
      if (s.contains("methods")) {
        cfg.sweep_methods.clear();
        for (const json& m : s.at("methods"))
          cfg.sweep_methods.push_back(method_from_name(m.get<std::string>()));
      }
      if (s.contains("betas"))
        cfg.sweep_betas = s.at("betas").get<std::vector<double>>();
      if (s.contains("workers"))
        cfg.sweep_workers = s.at("workers").get<std::size_t>();
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

ExperimentConfig load_experiment_file(const std::string& path) {
  if (!fs::exists(path))
    throw ConfigError("config file not found: " + path);
  return experiment_from_json(read_text(path));
}

std::string resolved_json(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  json j;
  j["seed"] = cfg.seed;
  j["data_seed"] = *cfg.data_seed;
  j["split_seed"] = *cfg.split_seed;
  j["model_seed"] = *cfg.model_seed;
  j["train_seed"] = *cfg.train_seed;
  j["method"] = method_name(cfg.method);
  j["out"] = cfg.out_dir;

  if (cfg.dataset.synthetic) {
    const ScmConfig& g = cfg.dataset.scm;
    j["dataset"]["synthetic"] = json{{"n", g.n},
                                     {"beta", g.beta},
                                     {"q", g.q},
                                     {"d1", g.d1},
                                     {"d2", g.d2},
                                     {"d3", g.d3},
                                     {"mixing_seed", g.mixing_seed},
                                     {"label_rule", label_rule_name(g.label_rule)}};
  } else {
    json c{{"path", cfg.dataset.csv_path},
           {"kind", csv_kind_name(cfg.dataset.csv_kind)}};
    if (cfg.dataset.label_threshold)
      c["label_threshold"] = *cfg.dataset.label_threshold;
    j["dataset"]["csv"] = c;
  }

  j["split"] = json{{"train", cfg.split.train},
                    {"val", cfg.split.val},
                    {"test", cfg.split.test}};
  j["model"] = json{{"z_dim", cfg.z_dim},
                    {"hidden", cfg.hidden},
                    {"embed_dim", cfg.embed_dim}};

  const TrainConfig& tc = cfg.train;
  j["train"] = json{{"mode", mode_name(tc.mode)},
                    {"epochs", tc.epochs},
                    {"batch_size", tc.batch_size},
                    {"lr", tc.lr},
                    {"patience", tc.patience},
                    {"club_perm", perm_name(tc.club_perm)},
                    {"scheme", scheme_name(tc.scheme)},
                    {"weights", json{{"lambda", tc.weights.lambda},
                                     {"use_kl", tc.weights.use_kl},
                                     {"club_weight", tc.weights.club_weight},
                                     {"t_weight", tc.weights.t_weight},
                                     {"t_target", tc.weights.t_target}}},
                    {"attack", attack_to_json(tc.attack)}};

  j["eval"] = json::array();
  for (const AttackConfig& a : cfg.eval) j["eval"].push_back(attack_to_json(a));

  j["scaling"] = json{{"m_list", cfg.scaling_m},
                      {"seeds", cfg.scaling_seeds},
                      {"m_ref", cfg.scaling_m_ref},
                      {"bins_per_dim", cfg.scaling_bins}};

  json methods = json::array();
  for (Method m : cfg.sweep_methods) methods.push_back(method_name(m));
  j["sweep"] = json{{"seeds", cfg.sweep_seeds},
                    {"methods", methods},
                    {"betas", cfg.sweep_betas},
                    {"workers", cfg.sweep_workers}};
  return j.dump(2) + "\n";
}

ExperimentConfig resolve(const ExperimentConfig& in) {
  ExperimentConfig cfg = in;
  if (!cfg.data_seed) cfg.data_seed = derive_seed(cfg.seed, "data");
  if (!cfg.split_seed) cfg.split_seed = derive_seed(cfg.seed, "split");
  if (!cfg.model_seed) cfg.model_seed = derive_seed(cfg.seed, "model");
  if (!cfg.train_seed) cfg.train_seed = derive_seed(cfg.seed, "train");
  cfg.dataset.scm.seed = *cfg.data_seed;
  cfg.train.seed = *cfg.train_seed;

  ObjectiveWeights& w = cfg.train.weights;
  switch (cfg.method) {
    case Method::Base:
      w.use_kl = false;
      w.club_weight = 0.0;
      w.t_weight = 0.0;
      break;
    case Method::Ib:
      w.use_kl = true;
      w.club_weight = 0.0;
      w.t_weight = 0.0;
      break;
    case Method::RCvae:
      w.use_kl = true;
      w.club_weight = 0.0;
      if (w.t_weight <= 0.0)
        throw ConfigError(
            "method r-cvae keeps the intervention constraint; t_weight must "
            "be > 0");
      break;
    case Method::Cari:
      w.use_kl = true;
      if (w.club_weight <= 0.0)
        throw ConfigError(
            "method cari keeps the contrast bound; club_weight must be > 0");
      if (w.t_weight <= 0.0)
        throw ConfigError(
            "method cari keeps the intervention constraint; t_weight must "
            "be > 0");
      break;
  }
  return cfg;
}

Dataset load_dataset(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  if (cfg.dataset.synthetic) {
    validate(cfg.dataset.scm);
    return generate(cfg.dataset.scm);
  }
  const std::string& path = cfg.dataset.csv_path;
  if (path.empty()) throw ConfigError("dataset: csv source needs a path");
  if (!fs::exists(path)) throw ConfigError("dataset path not found: " + path);
  switch (cfg.dataset.csv_kind) {
    case Dataset::Kind::Factor: return load_factor_csv(path);
    case Dataset::Kind::IdRating:
      return load_id_rating_csv(path, cfg.dataset.label_threshold);
    case Dataset::Kind::Feature:
      return load_feature_rating_csv(path, cfg.dataset.label_threshold);
  }
  throw ConfigError("unhandled csv kind");
}

ModelConfig model_config_from(const ExperimentConfig& raw, const Dataset& ds) {
  const ExperimentConfig cfg = resolve(raw);
  ModelConfig mc = model_config_for(ds);
  mc.z_dim = cfg.z_dim;
  mc.hidden = cfg.hidden;
  mc.embed_dim = cfg.embed_dim;
  mc.prior = (cfg.method == Method::RCvae || cfg.method == Method::Cari)
                 ? PriorKind::ConditionalLabel
                 : PriorKind::Standard;
  mc.t_target = cfg.train.weights.t_target;
  return mc;
}

// ---- evaluation report --------------------------------------------------------------

std::string metrics_json(const MetricsReport& r) {
  json j;
  j["method"] = r.method;
  j["mode"] = r.mode;
  j["seed"] = r.seed;
  j["clean"] = json{{"auc", r.clean.auc}, {"acc", r.clean.acc}};
  j["attacks"] = json::array();
  for (const AttackReport& a : r.attacks) {
    json e = attack_to_json(a.attack);
    e["adv_auc"] = a.adv.adv_auc;
    e["adv_acc"] = a.adv.adv_acc;
    j["attacks"].push_back(e);
  }
  if (r.factor) {
    j["dcor"] = json{{"pa", r.dcor_pa}, {"nd", r.dcor_nd}, {"dc", r.dcor_dc}};
    j["cmi_probe"] = r.cmi;
  }
  return j.dump(2) + "\n";
}

std::string metrics_csv_header() {
  return "method,mode,norm,beta,seed,auc,acc,adv_auc,adv_acc,dcor_pa,dcor_nd,"
         "dcor_dc,cmi";
}

std::string metrics_csv_rows(const MetricsReport& r) {
  std::string out;
  for (const AttackReport& a : r.attacks) {
    out += r.method + ',' + r.mode + ',' + norm_name(a.attack.norm) + ',' +
           fmt17(a.attack.beta) + ',' + std::to_string(r.seed) + ',' +
           fmt17(r.clean.auc) + ',' + fmt17(r.clean.acc) + ',' +
           fmt17(a.adv.adv_auc) + ',' + fmt17(a.adv.adv_acc) + ',';
    if (r.factor)
      out += fmt17(r.dcor_pa) + ',' + fmt17(r.dcor_nd) + ',' +
             fmt17(r.dcor_dc) + ',' + fmt17(r.cmi);
    else
      out += ",,,";
    out += '\n';
  }
  return out;
}

// ---- subcommands -----------------------------------------------------------------------

void cmd_gen_data(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  if (!cfg.dataset.synthetic)
    throw ConfigError("gen-data: synthetic source required");
  validate(cfg.dataset.scm);
  const Dataset ds = generate(cfg.dataset.scm);
  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  save_factor_csv((out / "data.csv").string(), ds);
  const ScmConfig& g = cfg.dataset.scm;
  const json sidecar{{"n", g.n},
                     {"beta", g.beta},
                     {"q", g.q},
                     {"d1", g.d1},
                     {"d2", g.d2},
                     {"d3", g.d3},
                     {"seed", g.seed},
                     {"mixing_seed", g.mixing_seed},
                     {"label_rule", label_rule_name(g.label_rule)}};
  write_text(out / "data.json", sidecar.dump(2) + "\n");
}

TrainArtifacts cmd_train(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  const Dataset all = load_dataset(cfg);
  const SplitResult sp =
      split(all, cfg.split.train, cfg.split.val, cfg.split.test, *cfg.split_seed);
  validate(cfg.train, sp.train.n());
  const ModelConfig mc = model_config_from(cfg, all);
  validate(mc);

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  TrainArtifacts art;
  art.snapshot = (out / "resolved_config.json").string();
  write_text(art.snapshot, resolved_json(cfg));

  const ModelState init = init_model(mc, *cfg.model_seed);
  art.result = train(cfg.train, sp.train, sp.val, init);

  json extra{{"method", method_name(cfg.method)},
             {"mode", mode_name(cfg.train.mode)},
             {"seed", cfg.seed},
             {"best_epoch", art.result.best_epoch},
             {"best_val_auc", art.result.best_val_auc},
             {"val_intervention_effect", art.result.val_intervention_effect}};
  art.checkpoint_prefix = (out / "checkpoint").string();
  save_checkpoint(art.checkpoint_prefix, art.result.state, extra.dump());
  art.epochs_csv = (out / "epochs.csv").string();
  write_text(art.epochs_csv, epoch_log_csv(art.result.epochs));
  return art;
}

MetricsReport cmd_eval(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  const Dataset all = load_dataset(cfg);
  const SplitResult sp =
      split(all, cfg.split.train, cfg.split.val, cfg.split.test, *cfg.split_seed);

  const fs::path out(cfg.out_dir);
  const std::string prefix = (out / "checkpoint").string();
  if (!fs::exists(prefix + ".json"))
    throw DataError("checkpoint not found: " + prefix + ".json");
  const ModelState state = load_checkpoint(prefix);

  const ModelConfig want = model_config_from(cfg, all);
  if (state.cfg.id_input != want.id_input || state.cfg.d_in() != want.d_in())
    throw DataError("checkpoint input shape does not match the dataset (" +
                    std::to_string(state.cfg.d_in()) + " vs " +
                    std::to_string(want.d_in()) + ")");

  MetricsReport r;
  r.method = method_name(cfg.method);
  r.mode = mode_name(cfg.train.mode);
  r.seed = cfg.seed;
  r.clean = clean_metrics(state, sp.test);
  for (const AttackConfig& a : cfg.eval) {
    validate(a);
    r.attacks.push_back({a, adv_metrics(state, sp.test, a)});
  }
  if (all.kind == Dataset::Kind::Factor) {
    const Batch tb = full_batch(sp.test);
    const std::vector<double> z = encode_mean(state, tb);
    const std::size_t n = sp.test.n();
    const std::size_t zd = state.cfg.z_dim;
    r.factor = true;
    r.dcor_pa = distance_correlation(z, zd, sp.test.pa, sp.test.d_pa, n);
    r.dcor_nd = distance_correlation(z, zd, sp.test.nd, sp.test.d_nd, n);
    r.dcor_dc = distance_correlation(z, zd, sp.test.dc, sp.test.d_dc, n);
    r.cmi = cmi_probe(z, zd, sp.test.pa, sp.test.d_pa, sp.test.nd,
                      sp.test.d_nd, sp.test.y, n);
  }

  write_text(out / "metrics.json", metrics_json(r));
  append_csv(out / "metrics.csv", metrics_csv_header(), metrics_csv_rows(r));
  return r;
}

ScalingCheck cmd_scaling_check(const ExperimentConfig& raw) {
  const ExperimentConfig cfg = resolve(raw);
  if (!cfg.dataset.synthetic)
    throw ConfigError("scaling-check: synthetic source required");
  validate(cfg.dataset.scm);

  ModelConfig mc;
  mc.x_dim = cfg.dataset.scm.d1 + cfg.dataset.scm.d2 + cfg.dataset.scm.d3;
  mc.z_dim = cfg.z_dim;
  mc.hidden = cfg.hidden;
  mc.prior = (cfg.method == Method::RCvae || cfg.method == Method::Cari)
                 ? PriorKind::ConditionalLabel
                 : PriorKind::Standard;
  mc.t_target = cfg.train.weights.t_target;
  validate(mc);
  const ModelState model = init_model(mc, *cfg.model_seed);

  const ScalingCheck sc =
      scaling_check(cfg.dataset.scm, model, cfg.scaling_m, cfg.scaling_seeds,
                    cfg.scaling_m_ref, cfg.scaling_bins);

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  write_text(out / "scaling.csv", scaling_csv(sc));
  const json summary{{"gamma", sc.gamma},
                     {"ref_info", sc.ref_info},
                     {"seeds", sc.seeds},
                     {"m_ref", cfg.scaling_m_ref},
                     {"bins_per_dim", cfg.scaling_bins},
                     {"m_list", sc.m_list},
                     {"median_gap", sc.median_gap},
                     {"q25", sc.q25},
                     {"q75", sc.q75}};
  write_text(out / "scaling.json", summary.dump(2) + "\n");
  return sc;
}

void cmd_sweep(const ExperimentConfig& raw) {
  const ExperimentConfig base = resolve(raw);
  if (base.sweep_seeds.empty() || base.sweep_methods.empty() ||
      base.sweep_betas.empty())
    throw ConfigError("sweep: empty grid");

  struct Cell {
    std::uint64_t seed;
    Method method;
    double beta;
  };
  std::vector<Cell> grid;
  for (std::uint64_t s : base.sweep_seeds)
    for (Method m : base.sweep_methods)
      for (double b : base.sweep_betas) grid.push_back({s, m, b});

  std::vector<std::string> rows(grid.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= grid.size()) return;
      try {
        const Cell& c = grid[i];
        ExperimentConfig run = base;
        run.seed = c.seed;
        run.data_seed.reset();
        run.split_seed.reset();
        run.model_seed.reset();
        run.train_seed.reset();
        run.method = c.method;
        run.train.attack.beta = c.beta;
        for (AttackConfig& a : run.eval) a.beta = c.beta;
        run.out_dir = (fs::path(base.out_dir) / "runs" /
                       ("s" + std::to_string(c.seed) + "_" +
                        method_name(c.method) + "_b" + fmt_short(c.beta)))
                          .string();
        cmd_train(run);
        rows[i] = metrics_csv_rows(cmd_eval(run));
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };

  std::size_t n_workers = base.sweep_workers
                              ? base.sweep_workers
                              : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min(n_workers, grid.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::string all_rows;
  for (const std::string& r : rows) all_rows += r;
  fs::create_directories(base.out_dir);
  append_csv(fs::path(base.out_dir) / "metrics.csv", metrics_csv_header(),
             all_rows);
}

// ---- command line -----------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"robust causal representation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_f;
  std::optional<std::string> method_f, mode_f, norm_f, out_f;
  std::optional<double> beta_f;

  app.add_option("--config", config_path, "JSON experiment description");
  app.add_option("--seed", seed_f,
                 "master seed (rederives every stream seed)");
  app.add_option("--method", method_f, "base | ib | r-cvae | cari");
  app.add_option("--mode", mode_f, "standard | robust");
  app.add_option("--beta", beta_f,
                 "attack budget for training and every eval entry");
  app.add_option("--attack-norm", norm_f, "2 | inf");
  app.add_option("--out", out_f, "output directory");

  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic draw");
  CLI::App* tr = app.add_subcommand("train", "train and checkpoint");
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* sc =
      app.add_subcommand("scaling-check", "estimator convergence sweep");
  CLI::App* sw = app.add_subcommand("sweep", "fan out (seed, method, beta)");
  for (CLI::App* s : {gen, tr, ev, sc, sw}) s->fallthrough();

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << '\n';
    return kExitConfigError;
  }

  try {
    ExperimentConfig cfg = config_path.empty()
                               ? ExperimentConfig{}
                               : load_experiment_file(config_path);
    if (seed_f) {
      cfg.seed = *seed_f;
      cfg.data_seed.reset();
      cfg.split_seed.reset();
      cfg.model_seed.reset();
      cfg.train_seed.reset();
    }
    if (method_f) cfg.method = method_from_name(*method_f);
    if (mode_f) cfg.train.mode = mode_from_name(*mode_f);
    if (beta_f) {
      cfg.train.attack.beta = *beta_f;
      for (AttackConfig& a : cfg.eval) a.beta = *beta_f;
    }
    if (norm_f) {
      const AttackNorm n = norm_from_name(*norm_f);
      cfg.train.attack.norm = n;
      for (AttackConfig& a : cfg.eval) a.norm = n;
    }
    if (out_f) cfg.out_dir = *out_f;

    if (gen->parsed()) {
      cmd_gen_data(cfg);
      std::cout << "wrote " << (fs::path(cfg.out_dir) / "data.csv").string()
                << '\n';
    } else if (tr->parsed()) {
      const TrainArtifacts art = cmd_train(cfg);
      std::cout << "best epoch " << art.result.best_epoch << ", val auc "
                << fmt17(art.result.best_val_auc) << ", checkpoint "
                << art.checkpoint_prefix << '\n';
    } else if (ev->parsed()) {
      const MetricsReport r = cmd_eval(cfg);
      std::cout << metrics_csv_header() << '\n' << metrics_csv_rows(r);
    } else if (sc->parsed()) {
      const ScalingCheck s = cmd_scaling_check(cfg);
      std::cout << "gamma " << fmt17(s.gamma) << ", ref_info "
                << fmt17(s.ref_info) << '\n';
    } else if (sw->parsed()) {
      cmd_sweep(cfg);
      std::cout << "wrote " << (fs::path(cfg.out_dir) / "metrics.csv").string()
                << '\n';
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitDataError;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumericError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace cari
