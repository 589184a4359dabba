#include "cari/model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cari/rng.hpp"
#include "json.hpp"

namespace cari {

namespace {

using nlohmann::json;

void shape(Param& p, const char* name, std::size_t rows, std::size_t cols) {
  p.name = name;
  p.rows = rows;
  p.cols = cols;
  p.value.assign(rows * cols, 0.0);
}

}  // namespace

ModelConfig model_config_for(const Dataset& ds) {
  ModelConfig cfg;
  if (ds.kind == Dataset::Kind::IdRating) {
    cfg.id_input = true;
    cfg.num_users = ds.num_users;
    cfg.num_items = ds.num_items;
  } else {
    cfg.x_dim = ds.x_dim;
  }
  return cfg;
}

void validate(const ModelConfig& cfg) {
  if (cfg.z_dim < 1 || cfg.hidden < 1) {
    throw ConfigError("model: z_dim and hidden must be >= 1");
  }
  if (cfg.id_input) {
    if (cfg.num_users < 1 || cfg.num_items < 1 || cfg.embed_dim < 1) {
      throw ConfigError("model: id input needs num_users, num_items, embed_dim >= 1");
    }
  } else if (cfg.x_dim < 1) {
    throw ConfigError("model: feature input needs x_dim >= 1");
  }
  if (cfg.t_target < 0.0) throw ConfigError("model: t_target must be >= 0");
}

std::vector<Param*> ModelState::params() {
  std::vector<Param*> out;
  if (cfg.id_input) {
    out.push_back(&enc_user);
    out.push_back(&enc_item);
  }
  out.insert(out.end(), {&enc_w1, &enc_b1, &enc_w2, &enc_b2});
  if (cfg.id_input) {
    out.push_back(&int_user);
    out.push_back(&int_item);
  }
  out.insert(out.end(), {&int_w1, &int_b1, &int_w2, &int_b2});
  out.insert(out.end(), {&pred_w1, &pred_b1, &pred_w2, &pred_b2});
  return out;
}

std::vector<const Param*> ModelState::params() const {
  auto mut = const_cast<ModelState*>(this)->params();
  return std::vector<const Param*>(mut.begin(), mut.end());
}

ModelState init_model(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  ModelState st;
  st.cfg = cfg;
  const std::size_t d_in = cfg.d_in(), h = cfg.hidden, z = cfg.z_dim;
  if (cfg.id_input) {
    shape(st.enc_user, "enc_user", cfg.num_users, cfg.embed_dim);
    shape(st.enc_item, "enc_item", cfg.num_items, cfg.embed_dim);
    shape(st.int_user, "int_user", cfg.num_users, cfg.embed_dim);
    shape(st.int_item, "int_item", cfg.num_items, cfg.embed_dim);
  }
  shape(st.enc_w1, "enc_w1", d_in, h);
  shape(st.enc_b1, "enc_b1", 1, h);
  shape(st.enc_w2, "enc_w2", h, 2 * z);
  shape(st.enc_b2, "enc_b2", 1, 2 * z);
  shape(st.int_w1, "int_w1", d_in, h);
  shape(st.int_b1, "int_b1", 1, h);
  shape(st.int_w2, "int_w2", h, z);
  shape(st.int_b2, "int_b2", 1, z);
  shape(st.pred_w1, "pred_w1", z, h);
  shape(st.pred_b1, "pred_b1", 1, h);
  shape(st.pred_w2, "pred_w2", h, 2);
  shape(st.pred_b2, "pred_b2", 1, 2);

  Rng rng(derive_seed(seed, "init"));
  for (Param* p : st.params()) {
    const bool bias = p->rows == 1 && p->name.find("_b") != std::string::npos;
    if (bias) continue;  // biases stay zero
    const bool table = p->name.find("_user") != std::string::npos ||
                       p->name.find("_item") != std::string::npos;
    const double fan_in = static_cast<double>(table ? cfg.embed_dim : p->rows);
    const double bound = 1.0 / std::sqrt(fan_in);
    rng.fill_uniform(p->value, -bound, bound);
  }
  return st;
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Batch b;
  b.n = indices.size();
  b.y.reserve(b.n);
  for (const std::size_t i : indices) {
    if (i >= ds.n()) throw ConfigError("make_batch: index out of range");
    b.y.push_back(ds.y[i]);
  }
  if (ds.kind == Dataset::Kind::IdRating) {
    for (const std::size_t i : indices) {
      b.user.push_back(ds.user[i]);
      b.item.push_back(ds.item[i]);
    }
  } else {
    b.x.reserve(b.n * ds.x_dim);
    for (const std::size_t i : indices) {
      for (std::size_t j = 0; j < ds.x_dim; ++j) b.x.push_back(ds.x[i * ds.x_dim + j]);
    }
  }
  return b;
}

Batch full_batch(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.n());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(ds, idx);
}

ModelBinding ModelBinding::leaves(Tape& tape, const ModelState& state) {
  ModelBinding b;
  for (const Param* p : state.params()) {
    b.entries_.emplace_back(p, tape.leaf(p->rows, p->cols, p->value));
  }
  return b;
}

ModelBinding ModelBinding::packed(Tape& tape, const ModelState& state) {
  ModelBinding b;
  std::vector<double> flat;
  for (const Param* p : state.params()) {
    flat.insert(flat.end(), p->value.begin(), p->value.end());
  }
  const std::size_t total = flat.size();
  b.packed_ = tape.leaf(1, total, std::move(flat));
  std::size_t off = 0;
  for (const Param* p : state.params()) {
    Tensor view = reshape(slice_cols(b.packed_, off, p->size()), p->rows, p->cols);
    b.entries_.emplace_back(p, view);
    off += p->size();
  }
  return b;
}

Tensor ModelBinding::at(const Param& p) const {
  for (const auto& [param, tensor] : entries_) {
    if (param == &p) return tensor;
  }
  throw ConfigError("ModelBinding: parameter '" + p.name + "' is not bound");
}

namespace {

// Input features as a tape tensor: raw x columns or concatenated embeddings.
Tensor input_fwd(Tape& tape, const ModelState& state, const ModelBinding& bind,
                 const Batch& batch, const Param& user_table, const Param& item_table) {
  if (state.cfg.id_input) {
    if (batch.user.size() != batch.n || batch.item.size() != batch.n) {
      throw ConfigError("model: id batch missing user/item columns");
    }
    Tensor u = gather_rows(bind.at(user_table), batch.user);
    Tensor v = gather_rows(bind.at(item_table), batch.item);
    return concat_cols(u, v);
  }
  if (batch.x.size() != batch.n * state.cfg.x_dim) {
    throw ConfigError("model: batch feature width does not match x_dim=" +
                      std::to_string(state.cfg.x_dim));
  }
  return tape.leaf(batch.n, state.cfg.x_dim, batch.x);
}

}  // namespace

EncodeOut encode_fwd(Tape& tape, const ModelState& state, const ModelBinding& bind,
                     const Batch& batch) {
  Tensor x = input_fwd(tape, state, bind, batch, state.enc_user, state.enc_item);
  Tensor h = elu(add_rowvec(matmul(x, bind.at(state.enc_w1)), bind.at(state.enc_b1)));
  Tensor out = add_rowvec(matmul(h, bind.at(state.enc_w2)), bind.at(state.enc_b2));
  const std::size_t z = state.cfg.z_dim;
  EncodeOut e;
  e.mu = slice_cols(out, 0, z);
  e.logvar = clamp(slice_cols(out, z, z), -10.0, 10.0);
  return e;
}

Tensor intervene_fwd(Tape& tape, const ModelState& state, const ModelBinding& bind,
                     const Batch& batch) {
  Tensor x = input_fwd(tape, state, bind, batch, state.int_user, state.int_item);
  Tensor h = elu(add_rowvec(matmul(x, bind.at(state.int_w1)), bind.at(state.int_b1)));
  return add_rowvec(matmul(h, bind.at(state.int_w2)), bind.at(state.int_b2));
}

Tensor predict_fwd(Tape& tape, const ModelState& state, const ModelBinding& bind,
                   const Tensor& z) {
  (void)tape;
  if (z.cols() != state.cfg.z_dim) {
    throw ConfigError("predict: z width " + std::to_string(z.cols()) +
                      " does not match z_dim " + std::to_string(state.cfg.z_dim));
  }
  Tensor h = elu(add_rowvec(matmul(z, bind.at(state.pred_w1)), bind.at(state.pred_b1)));
  return add_rowvec(matmul(h, bind.at(state.pred_w2)), bind.at(state.pred_b2));
}

Tensor reparameterize(const Tensor& mu, const Tensor& logvar, const Tensor& noise) {
  return add(mu, mul(exp_elem(mul_scalar(logvar, 0.5)), noise));
}

std::vector<double> encode_mean(const ModelState& state, const Batch& batch) {
  Tape tape;
  ModelBinding bind = ModelBinding::leaves(tape, state);
  return encode_fwd(tape, state, bind, batch).mu.value();
}

std::vector<double> intervene_values(const ModelState& state, const Batch& batch) {
  Tape tape;
  ModelBinding bind = ModelBinding::leaves(tape, state);
  return intervene_fwd(tape, state, bind, batch).value();
}

std::vector<double> predict_logits(const ModelState& state, const std::vector<double>& z,
                                   std::size_t n) {
  Tape tape;
  ModelBinding bind = ModelBinding::leaves(tape, state);
  Tensor zt = tape.leaf(n, state.cfg.z_dim, z);
  return predict_fwd(tape, state, bind, zt).value();
}

std::vector<double> positive_scores(const ModelState& state, const std::vector<double>& z,
                                    std::size_t n) {
  const std::vector<double> logits = predict_logits(state, z, n);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = logits[2 * i] - logits[2 * i + 1];  // l0 - l1
    out[i] = d >= 0.0 ? std::exp(-d) / (1.0 + std::exp(-d)) : 1.0 / (1.0 + std::exp(d));
  }
  return out;
}

// ---- checkpoints -------------------------------------------------------------

namespace {

constexpr const char* kCheckpointFormat = "cari-checkpoint-v1";

json config_to_json(const ModelConfig& cfg) {
  return json{{"id_input", cfg.id_input},
              {"x_dim", cfg.x_dim},
              {"num_users", cfg.num_users},
              {"num_items", cfg.num_items},
              {"embed_dim", cfg.embed_dim},
              {"z_dim", cfg.z_dim},
              {"hidden", cfg.hidden},
              {"prior", cfg.prior == PriorKind::ConditionalLabel ? "conditional" : "standard"},
              {"t_target", cfg.t_target}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.id_input = j.at("id_input").get<bool>();
  cfg.x_dim = j.at("x_dim").get<std::size_t>();
  cfg.num_users = j.at("num_users").get<std::size_t>();
  cfg.num_items = j.at("num_items").get<std::size_t>();
  cfg.embed_dim = j.at("embed_dim").get<std::size_t>();
  cfg.z_dim = j.at("z_dim").get<std::size_t>();
  cfg.hidden = j.at("hidden").get<std::size_t>();
  const std::string prior = j.at("prior").get<std::string>();
  if (prior == "conditional") {
    cfg.prior = PriorKind::ConditionalLabel;
  } else if (prior == "standard") {
    cfg.prior = PriorKind::Standard;
  } else {
    throw DataError("checkpoint: unknown prior kind '" + prior + "'");
  }
  cfg.t_target = j.at("t_target").get<double>();
  return cfg;
}

void write_le_doubles(std::ofstream& out, const std::vector<double>& values) {
  for (const double v : values) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof bits);
    unsigned char bytes[8];
    for (int k = 0; k < 8; ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

}  // namespace

void save_checkpoint(const std::string& prefix, const ModelState& state,
                     const std::string& extra_json) {
  json manifest;
  manifest["format"] = kCheckpointFormat;
  manifest["model"] = config_to_json(state.cfg);
  manifest["extra"] = json::parse(extra_json);
  json params = json::array();
  std::size_t total = 0;
  for (const Param* p : state.params()) {
    params.push_back(json{{"name", p->name}, {"rows", p->rows}, {"cols", p->cols}});
    total += p->size();
  }
  manifest["params"] = params;
  manifest["total_values"] = total;

  std::ofstream jf(prefix + ".json");
  if (!jf) throw DataError("cannot open for writing: " + prefix + ".json");
  jf << manifest.dump(2) << '\n';
  if (!jf) throw DataError("write failed: " + prefix + ".json");

  std::ofstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw DataError("cannot open for writing: " + prefix + ".bin");
  for (const Param* p : state.params()) write_le_doubles(bf, p->value);
  if (!bf) throw DataError("write failed: " + prefix + ".bin");
}

ModelState load_checkpoint(const std::string& prefix, std::string* extra_json) {
  if (!std::filesystem::exists(prefix + ".json")) {
    throw ConfigError("checkpoint not found: " + prefix + ".json");
  }
  std::ifstream jf(prefix + ".json");
  json manifest;
  try {
    jf >> manifest;
  } catch (const json::exception& e) {
    throw DataError("checkpoint manifest parse error: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != kCheckpointFormat) {
    throw DataError("checkpoint: unsupported format field");
  }
  ModelState st = init_model(config_from_json(manifest.at("model")), 0);
  if (extra_json != nullptr) *extra_json = manifest.at("extra").dump();

  std::vector<Param*> params = st.params();
  const json& jp = manifest.at("params");
  if (jp.size() != params.size()) {
    throw DataError("checkpoint: expected " + std::to_string(params.size()) +
                    " parameters, manifest has " + std::to_string(jp.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (jp[i].at("name").get<std::string>() != params[i]->name ||
        jp[i].at("rows").get<std::size_t>() != params[i]->rows ||
        jp[i].at("cols").get<std::size_t>() != params[i]->cols) {
      throw DataError("checkpoint: parameter " + std::to_string(i) +
                      " does not match the model layout");
    }
  }

  std::ifstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw ConfigError("checkpoint blob not found: " + prefix + ".bin");
  for (Param* p : params) {
    for (double& v : p->value) {
      unsigned char bytes[8];
      if (!bf.read(reinterpret_cast<char*>(bytes), 8)) {
        throw DataError("checkpoint blob truncated: " + prefix + ".bin");
      }
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
      std::memcpy(&v, &bits, sizeof v);
    }
  }
  char extra_byte;
  if (bf.read(&extra_byte, 1)) {
    throw DataError("checkpoint blob has trailing bytes: " + prefix + ".bin");
  }
  return st;
}

}  // namespace cari
