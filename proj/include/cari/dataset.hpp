#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cari/errors.hpp"

namespace cari {

// Columnar sample store.  Exactly one layout is populated, selected by `kind`:
//   Factor   — synthetic data with causal factor blocks pa/nd/dc; x is their
//              concatenation row by row.
//   Feature  — plain numeric features x.
//   IdRating — (user, item) index pairs for embedding models.
// Labels are always binary.
struct Dataset {
  enum class Kind { Factor, Feature, IdRating };

  Kind kind = Kind::Feature;
  std::vector<int> y;

  // Factor / Feature layout.
  std::vector<double> x;  // n * x_dim, row major
  std::size_t x_dim = 0;
  // Factor blocks (Factor kind only), n * d_* each.
  std::vector<double> pa, nd, dc;
  std::size_t d_pa = 0, d_nd = 0, d_dc = 0;

  // IdRating layout.
  std::vector<std::size_t> user, item;
  std::size_t num_users = 0, num_items = 0;

  std::size_t n() const { return y.size(); }
};

// Row subset in the given index order; all populated columns stay aligned.
Dataset take(const Dataset& ds, const std::vector<std::size_t>& indices);

struct SplitResult {
  Dataset train, val, test;
};

// Deterministic shuffled split.  Fractions must sum to 1 (tolerance 1e-9);
// sizes are floor(n*f_train) and floor(n*f_val), remainder test.
SplitResult split(const Dataset& ds, double f_train, double f_val, double f_test,
                  std::uint64_t seed);

// ---- factor CSV (synthetic data) --------------------------------------------
// Header `pa_0..,nd_0..,dc_0..,y`; floats printed with 17 significant digits
// so the round trip is bit exact.

void save_factor_csv(const std::string& path, const Dataset& ds);
Dataset load_factor_csv(const std::string& path);

// ---- rating CSVs -------------------------------------------------------------
// id-rating: header `user_id,item_id,label`; ids are mapped to dense indices
//   in order of first appearance.
// feature-rating: header has a `label` column, every other column is a numeric
//   feature (column order preserved).
// If `label_threshold` is set, labels binarize as value >= threshold;
// otherwise the label column must already be 0/1.

Dataset load_id_rating_csv(const std::string& path,
                           std::optional<double> label_threshold = {});
Dataset load_feature_rating_csv(const std::string& path,
                                std::optional<double> label_threshold = {});

}  // namespace cari
