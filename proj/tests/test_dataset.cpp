#include "cari/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "cari/synthgen.hpp"
#include "doctest.h"

using namespace cari;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

}  // namespace

TEST_CASE("factor csv round trip is bit exact") {
  ScmConfig cfg;
  cfg.n = 40;
  cfg.beta = 0.3;
  Dataset ds = generate(cfg);
  const std::string path = temp_path("cari_roundtrip.csv");
  save_factor_csv(path, ds);
  Dataset back = load_factor_csv(path);
  CHECK(back.kind == Dataset::Kind::Factor);
  CHECK(back.n() == ds.n());
  CHECK(back.pa == ds.pa);
  CHECK(back.nd == ds.nd);
  CHECK(back.dc == ds.dc);
  CHECK(back.x == ds.x);
  CHECK(back.y == ds.y);
  std::filesystem::remove(path);
}

TEST_CASE("factor csv header and row errors carry the line number") {
  const std::string path = temp_path("cari_badfactor.csv");
  write_file(path, "pa_0,nd_0,wrong,y\n0.1,0.2,0.3,1\n");
  CHECK_THROWS_AS(load_factor_csv(path), DataError);

  write_file(path, "pa_0,nd_0,dc_0,y\n0.1,0.2,0.3,1\n0.1,0.2,0.3\n");
  CHECK_THROWS_WITH_AS(load_factor_csv(path), doctest::Contains(":3:"), DataError);

  write_file(path, "pa_0,nd_0,dc_0,y\n0.1,oops,0.3,1\n");
  CHECK_THROWS_WITH_AS(load_factor_csv(path), doctest::Contains(":2:"), DataError);

  write_file(path, "pa_0,nd_0,dc_0,y\n0.1,0.2,0.3,2\n");
  CHECK_THROWS_AS(load_factor_csv(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("missing dataset file is a config error, not a data error") {
  CHECK_THROWS_AS(load_factor_csv("/nonexistent/nowhere.csv"), ConfigError);
  CHECK_THROWS_AS(load_id_rating_csv("/nonexistent/nowhere.csv"), ConfigError);
}

TEST_CASE("split sizes, disjointness, determinism") {
  ScmConfig cfg;
  cfg.n = 500;
  Dataset ds = generate(cfg);
  SplitResult sp = split(ds, 0.6, 0.2, 0.2, 9);
  CHECK(sp.train.n() == 300);
  CHECK(sp.val.n() == 100);
  CHECK(sp.test.n() == 100);

  // Disjoint and exhaustive: every original row appears exactly once across
  // the three parts (rows are unique with probability 1 here).
  std::set<std::vector<double>> seen;
  for (const Dataset* part : {&sp.train, &sp.val, &sp.test}) {
    for (std::size_t i = 0; i < part->n(); ++i) {
      seen.insert(std::vector<double>(part->x.begin() + static_cast<long>(i * 15),
                                      part->x.begin() + static_cast<long>((i + 1) * 15)));
    }
  }
  CHECK(seen.size() == 500);

  SplitResult sp2 = split(ds, 0.6, 0.2, 0.2, 9);
  CHECK(sp2.train.x == sp.train.x);
  CHECK(sp2.test.y == sp.test.y);

  SplitResult all = split(ds, 1.0, 0.0, 0.0, 9);
  CHECK(all.train.n() == 500);
  CHECK(all.val.n() == 0);

  CHECK_THROWS_AS(split(ds, 0.5, 0.2, 0.2, 9), ConfigError);
}

TEST_CASE("id rating csv maps ids densely in first-appearance order") {
  const std::string path = temp_path("cari_ids.csv");
  write_file(path, "user_id,item_id,label\nu9,i3,1\nu2,i3,0\nu9,i1,1\n");
  Dataset ds = load_id_rating_csv(path);
  CHECK(ds.kind == Dataset::Kind::IdRating);
  CHECK(ds.n() == 3);
  CHECK(ds.num_users == 2);
  CHECK(ds.num_items == 2);
  CHECK(ds.user == std::vector<std::size_t>{0, 1, 0});
  CHECK(ds.item == std::vector<std::size_t>{0, 0, 1});
  CHECK(ds.y == std::vector<int>{1, 0, 1});
  std::filesystem::remove(path);
}

TEST_CASE("id rating csv with threshold binarizes ratings") {
  const std::string path = temp_path("cari_ratings.csv");
  write_file(path, "user_id,item_id,label\na,b,5\na,c,2\nd,b,4\n");
  CHECK_THROWS_AS(load_id_rating_csv(path), DataError);  // not 0/1, no threshold
  Dataset ds = load_id_rating_csv(path, 4.0);
  CHECK(ds.y == std::vector<int>{1, 0, 1});
  std::filesystem::remove(path);
}

TEST_CASE("feature rating csv picks out the label column") {
  const std::string path = temp_path("cari_features.csv");
  std::string body = "f0,f1,label,f2\n1,2,1,3\n4,5,0,6\n";
  write_file(path, body);
  Dataset ds = load_feature_rating_csv(path);
  CHECK(ds.kind == Dataset::Kind::Feature);
  CHECK(ds.x_dim == 3);
  CHECK(ds.x == std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(ds.y == std::vector<int>{1, 0});
  std::filesystem::remove(path);
}

TEST_CASE("header-only rating file is an empty-dataset error") {
  const std::string path = temp_path("cari_empty.csv");
  write_file(path, "user_id,item_id,label\n");
  CHECK_THROWS_AS(load_id_rating_csv(path), DataError);
  write_file(path, "f0,label\n");
  CHECK_THROWS_AS(load_feature_rating_csv(path), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("take keeps id columns aligned") {
  const std::string path = temp_path("cari_take.csv");
  write_file(path, "user_id,item_id,label\nu1,i1,1\nu2,i2,0\nu3,i3,1\n");
  Dataset ds = load_id_rating_csv(path);
  Dataset sub = take(ds, {2, 0});
  CHECK(sub.user == std::vector<std::size_t>{2, 0});
  CHECK(sub.item == std::vector<std::size_t>{2, 0});
  CHECK(sub.y == std::vector<int>{1, 1});
  CHECK(sub.num_users == 3);
  std::filesystem::remove(path);
}
