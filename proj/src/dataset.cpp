#include "cari/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cari/rng.hpp"

namespace cari {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& path, std::size_t lineno) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') {
    throw DataError(path + ":" + std::to_string(lineno) + ": not a number: '" + s + "'");
  }
  return v;
}

int binarize_label(double v, std::optional<double> threshold, const std::string& path,
                   std::size_t lineno) {
  if (threshold.has_value()) return v >= *threshold ? 1 : 0;
  if (v == 0.0) return 0;
  if (v == 1.0) return 1;
  throw DataError(path + ":" + std::to_string(lineno) +
                  ": label must be 0 or 1 (or set a label threshold), got " +
                  std::to_string(v));
}

std::ifstream open_input(const std::string& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("dataset file not found: " + path);
  }
  std::ifstream in(path);
  if (!in) throw DataError("cannot open for reading: " + path);
  return in;
}

}  // namespace

Dataset take(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.kind = ds.kind;
  out.x_dim = ds.x_dim;
  out.d_pa = ds.d_pa;
  out.d_nd = ds.d_nd;
  out.d_dc = ds.d_dc;
  out.num_users = ds.num_users;
  out.num_items = ds.num_items;
  const auto copy_rows = [&](const std::vector<double>& src, std::vector<double>& dst,
                             std::size_t width) {
    if (width == 0 || src.empty()) return;
    dst.reserve(indices.size() * width);
    for (const std::size_t i : indices) {
      for (std::size_t j = 0; j < width; ++j) dst.push_back(src[i * width + j]);
    }
  };
  for (const std::size_t i : indices) {
    if (i >= ds.n()) throw ConfigError("take: index out of range");
    out.y.push_back(ds.y[i]);
  }
  copy_rows(ds.x, out.x, ds.x_dim);
  copy_rows(ds.pa, out.pa, ds.d_pa);
  copy_rows(ds.nd, out.nd, ds.d_nd);
  copy_rows(ds.dc, out.dc, ds.d_dc);
  if (ds.kind == Dataset::Kind::IdRating) {
    for (const std::size_t i : indices) {
      out.user.push_back(ds.user[i]);
      out.item.push_back(ds.item[i]);
    }
  }
  return out;
}

SplitResult split(const Dataset& ds, double f_train, double f_val, double f_test,
                  std::uint64_t seed) {
  if (f_train < 0 || f_val < 0 || f_test < 0 ||
      std::abs(f_train + f_val + f_test - 1.0) > 1e-9) {
    throw ConfigError("split: fractions must be non-negative and sum to 1");
  }
  Rng rng(derive_seed(seed, "split"));
  const std::vector<std::size_t> perm = rng.permutation(ds.n());
  const std::size_t n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(ds.n()) * f_train));
  const std::size_t n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(ds.n()) * f_val));
  std::vector<std::size_t> tr(perm.begin(), perm.begin() + static_cast<long>(n_train));
  std::vector<std::size_t> va(perm.begin() + static_cast<long>(n_train),
                              perm.begin() + static_cast<long>(n_train + n_val));
  std::vector<std::size_t> te(perm.begin() + static_cast<long>(n_train + n_val),
                              perm.end());
  return SplitResult{take(ds, tr), take(ds, va), take(ds, te)};
}

void save_factor_csv(const std::string& path, const Dataset& ds) {
  if (ds.kind != Dataset::Kind::Factor) {
    throw ConfigError("save_factor_csv: dataset has no factor blocks");
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  const auto head = [&](const char* name, std::size_t d) {
    for (std::size_t j = 0; j < d; ++j) out << name << '_' << j << ',';
  };
  head("pa", ds.d_pa);
  head("nd", ds.d_nd);
  head("dc", ds.d_dc);
  out << "y\n";
  char buf[40];
  const auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf << ',';
  };
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.d_pa; ++j) put(ds.pa[i * ds.d_pa + j]);
    for (std::size_t j = 0; j < ds.d_nd; ++j) put(ds.nd[i * ds.d_nd + j]);
    for (std::size_t j = 0; j < ds.d_dc; ++j) put(ds.dc[i * ds.d_dc + j]);
    out << ds.y[i] << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

Dataset load_factor_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const std::vector<std::string> header = split_fields(line);

  // Header must be pa_0.., nd_0.., dc_0.., y with contiguous indices.
  Dataset ds;
  ds.kind = Dataset::Kind::Factor;
  std::size_t pos = 0;
  const auto count_block = [&](const std::string& name) {
    std::size_t d = 0;
    while (pos < header.size() &&
           header[pos] == name + "_" + std::to_string(d)) {
      ++pos;
      ++d;
    }
    return d;
  };
  ds.d_pa = count_block("pa");
  ds.d_nd = count_block("nd");
  ds.d_dc = count_block("dc");
  if (ds.d_pa == 0 || ds.d_nd == 0 || ds.d_dc == 0 || pos + 1 != header.size() ||
      header[pos] != "y") {
    throw DataError(path + ":1: expected header pa_0..,nd_0..,dc_0..,y");
  }
  ds.x_dim = ds.d_pa + ds.d_nd + ds.d_dc;

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != ds.x_dim + 1) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(ds.x_dim + 1) + " fields, got " +
                      std::to_string(f.size()));
    }
    std::size_t c = 0;
    for (std::size_t j = 0; j < ds.d_pa; ++j) ds.pa.push_back(parse_double(f[c++], path, lineno));
    for (std::size_t j = 0; j < ds.d_nd; ++j) ds.nd.push_back(parse_double(f[c++], path, lineno));
    for (std::size_t j = 0; j < ds.d_dc; ++j) ds.dc.push_back(parse_double(f[c++], path, lineno));
    ds.y.push_back(binarize_label(parse_double(f[c], path, lineno), {}, path, lineno));
  }
  if (ds.y.empty()) throw DataError(path + ": no data rows");
  ds.x.reserve(ds.n() * ds.x_dim);
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (std::size_t j = 0; j < ds.d_pa; ++j) ds.x.push_back(ds.pa[i * ds.d_pa + j]);
    for (std::size_t j = 0; j < ds.d_nd; ++j) ds.x.push_back(ds.nd[i * ds.d_nd + j]);
    for (std::size_t j = 0; j < ds.d_dc; ++j) ds.x.push_back(ds.dc[i * ds.d_dc + j]);
  }
  return ds;
}

Dataset load_id_rating_csv(const std::string& path, std::optional<double> label_threshold) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const std::vector<std::string> header = split_fields(line);
  if (header != std::vector<std::string>{"user_id", "item_id", "label"}) {
    throw DataError(path + ":1: expected header user_id,item_id,label");
  }
  Dataset ds;
  ds.kind = Dataset::Kind::IdRating;
  // Raw ids map to dense indices in order of first appearance.
  std::map<std::string, std::size_t> users, items;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 3) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 3 fields, got " +
                      std::to_string(f.size()));
    }
    const auto dense = [&](std::map<std::string, std::size_t>& m, const std::string& key) {
      return m.emplace(key, m.size()).first->second;
    };
    ds.user.push_back(dense(users, f[0]));
    ds.item.push_back(dense(items, f[1]));
    ds.y.push_back(binarize_label(parse_double(f[2], path, lineno), label_threshold,
                                  path, lineno));
  }
  if (ds.y.empty()) throw DataError(path + ": no data rows");
  ds.num_users = users.size();
  ds.num_items = items.size();
  return ds;
}

Dataset load_feature_rating_csv(const std::string& path,
                                std::optional<double> label_threshold) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const std::vector<std::string> header = split_fields(line);
  std::size_t label_col = header.size();
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == "label") {
      if (label_col != header.size()) throw DataError(path + ":1: duplicate label column");
      label_col = j;
    }
  }
  if (label_col == header.size()) throw DataError(path + ":1: no 'label' column");
  Dataset ds;
  ds.kind = Dataset::Kind::Feature;
  ds.x_dim = header.size() - 1;
  if (ds.x_dim == 0) throw DataError(path + ":1: no feature columns");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != header.size()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                      std::to_string(header.size()) + " fields, got " +
                      std::to_string(f.size()));
    }
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (j == label_col) {
        ds.y.push_back(binarize_label(parse_double(f[j], path, lineno), label_threshold,
                                      path, lineno));
      } else {
        ds.x.push_back(parse_double(f[j], path, lineno));
      }
    }
  }
  if (ds.y.empty()) throw DataError(path + ": no data rows");
  return ds;
}

}  // namespace cari
