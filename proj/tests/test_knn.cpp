#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "xmr/knn.hpp"

using namespace xmr;

TEST_CASE("cosine distance endpoints") {
  Eigen::VectorXf u(3), v(3);
  u << 1, 2, 3;
  CHECK(cosine_distance(u, u) == 0.0);
  CHECK(cosine_distance(u, (-u).eval()) == doctest::Approx(2.0).epsilon(1e-15));
  v << -2, 1, 0;
  CHECK(cosine_distance(u, v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine_distance(u, (u * 7.5f).eval()) == doctest::Approx(0.0).epsilon(1e-12));

  Eigen::VectorXf w(2);
  w << 1, 1;
  CHECK(test::code_of([&] { (void)cosine_distance(u, w); }) == ErrorCode::kDimensionMismatch);
  CHECK(test::code_of([&] { (void)cosine_distance(u, Eigen::VectorXf::Zero(3).eval()); }) == ErrorCode::kZeroNorm);
}

TEST_CASE("dot kernel agrees with long double accumulation for every length") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  for (int n = 1; n < 80; ++n) {
    Eigen::VectorXd a(n), b(n);
    long double ref = 0;
    for (int i = 0; i < n; ++i) {
      a(i) = normal(rng);
      b(i) = normal(rng);
      ref += static_cast<long double>(a(i)) * b(i);
    }
    CHECK(dot64(a, b) == doctest::Approx(double(ref)).epsilon(1e-13));
  }
}

TEST_CASE("top_k equals the exhaustive oracle") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const int d = 1 + static_cast<int>(rng() % 64);
    const std::size_t k = 1 + rng() % 40;
    const auto set = test::random_set("x", n, d, rng);
    const Eigen::VectorXf q = test::gaussian_rows(1, d, rng).row(0).transpose();
    const auto got = top_k(set, q, k);
    oracle::Vec qv(q.data(), q.data() + d);
    const auto want = oracle::top_k(set, qv, k);
    REQUIRE(got.entries.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
      CHECK(got.entries[i].index == want[i].first);
      CHECK(std::abs(got.entries[i].distance - double(want[i].second)) <= 1e-12);
    }
  }
}

TEST_CASE("ties are broken by row index") {
  RowMatrixXf m(4, 2);
  m << 1, 1, 2, 0, 3, 3, 1, 1;
  const EmbeddingSet set({"a", "b", "c", "d"}, m);
  Eigen::Vector2f q(1, 1);
  const auto r = top_k(set, q, 4);
  CHECK(r.indices() == std::vector<std::size_t>{0, 2, 3, 1});
  CHECK(r.ids(set) == std::vector<std::string>{"a", "c", "d", "b"});
}

TEST_CASE("k larger than the set, exclusions and error cases") {
  std::mt19937_64 rng(5);
  const auto set = test::random_set("x", 5, 3, rng);
  Eigen::Vector3f q(1, 0, 0);
  CHECK(top_k(set, q, 50).entries.size() == 5);
  const auto r = top_k(set, q, 50, IdSet{"x1", "x3"});
  CHECK(r.entries.size() == 3);
  for (const auto& e : r.entries) CHECK((e.index != 1 && e.index != 3));

  CHECK(test::code_of([&] { top_k(set, q, 0); }) == ErrorCode::kInvalidConfig);
  CHECK(test::code_of([&] { top_k(set, Eigen::Vector2f(1, 0), 1); }) == ErrorCode::kDimensionMismatch);
  CHECK(test::code_of([&] { top_k(set, Eigen::Vector3f(0, 0, 0), 1); }) == ErrorCode::kZeroNorm);
  CHECK(test::code_of([&] { top_k(set, q, 1, IdSet(set.ids().begin(), set.ids().end())); }) ==
        ErrorCode::kEmptySearchSet);
}

TEST_CASE("batch_top_k is the single-query path regardless of worker count") {
  std::mt19937_64 rng(21);
  for (const int d : {3, 16, 33, 160}) {
    const auto set = test::random_set("x", 703, d, rng);
    const auto queries = test::random_set("q", 45, d, rng);
    const auto one = batch_top_k(set, queries, 9, 1);
    const auto three = batch_top_k(set, queries, 9, 3);
    REQUIRE(one.size() == 45);
    for (std::size_t i = 0; i < one.size(); ++i) {
      const auto single = top_k(set, queries.row(i).transpose(), 9);
      CHECK(one[i].entries == single.entries);
      CHECK(three[i].entries == single.entries);
      CHECK(one[i].query_id == queries.id(i));
    }
  }
}
