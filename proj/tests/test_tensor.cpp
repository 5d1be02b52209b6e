#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "psram/tensor.hpp"

using namespace psram;

TEST_CASE("matricization of a vector is itself") {
  DenseTensor t({2}, {5.0, 7.0});
  Matricization m = matricize(t, 0);
  REQUIRE(m.rows == 2);
  REQUIRE(m.cols == 1);
  REQUIRE(m.at(0, 0) == 5.0);
  REQUIRE(m.at(1, 0) == 7.0);
}

TEST_CASE("matricization of an all-zero tensor is a zero matrix") {
  DenseTensor t({2, 3, 4});
  for (std::size_t mode = 0; mode < 3; ++mode) {
    Matricization m = matricize(t, mode);
    REQUIRE(m.rows == t.shape[mode]);
    REQUIRE(m.cols == 24 / t.shape[mode]);
    for (double v : m.values) REQUIRE(v == 0.0);
  }
}

TEST_CASE("matricization matches element-coordinate enumeration") {
  DenseTensor t = DenseTensor::random({2, 3, 4}, 42);
  Matricization m = matricize(t, 1);
  REQUIRE(m.rows == 3);
  REQUIRE(m.cols == 8);
  std::size_t lin = 0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t k = 0; k < 4; ++k) {
        const std::size_t idx[3] = {i, j, k};
        const auto [row, col] = oracle::unfold_cell(t.shape, idx, 1);
        REQUIRE(m.at(row, col) == t.at(idx));
        (void)lin;
      }
}

TEST_CASE("matricize rejects an out-of-range mode") {
  DenseTensor t({2, 2});
  REQUIRE_THROWS_AS(matricize(t, 2), std::invalid_argument);
}

TEST_CASE("matricization round-trips exactly for every mode") {
  SplitMix64 g(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n_modes = 1 + g.next_below(4);
    std::vector<std::size_t> shape;
    const std::size_t caps[4] = {6, 5, 4, 3};
    for (std::size_t m = 0; m < n_modes; ++m) shape.push_back(1 + g.next_below(caps[m]));
    DenseTensor t = DenseTensor::random(shape, g.next_u64(), -1.0, 1.0);
    for (std::size_t mode = 0; mode < n_modes; ++mode) {
      DenseTensor back = tensorize(matricize(t, mode), shape);
      REQUIRE(back.values == t.values);
    }
  }
}

TEST_CASE("dense tensor validates shape against value count") {
  REQUIRE_THROWS_AS(DenseTensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
  REQUIRE_THROWS_AS(DenseTensor(std::vector<std::size_t>{}), std::invalid_argument);
  REQUIRE_THROWS_AS(DenseTensor({2, 0}), std::invalid_argument);
}

TEST_CASE("sparse tensor rejects duplicates and out-of-range coordinates") {
  REQUIRE_THROWS_AS(SparseTensor({2, 2}, {{{0, 0}, 1.0}, {{0, 0}, 2.0}}),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(SparseTensor({2, 2}, {{{0, 2}, 1.0}}), std::invalid_argument);
  REQUIRE_THROWS_AS(SparseTensor({2, 2}, {{{0}, 1.0}}), std::invalid_argument);
}

TEST_CASE("sparse densify places every nonzero") {
  SparseTensor s({2, 2, 2}, {{{1, 0, 1}, 3.5}, {{0, 1, 0}, -2.0}});
  DenseTensor d = s.densify();
  const std::size_t a[3] = {1, 0, 1};
  const std::size_t b[3] = {0, 1, 0};
  REQUIRE(d.at(a) == 3.5);
  REQUIRE(d.at(b) == -2.0);
  double sum = 0.0;
  for (double v : d.values) sum += std::abs(v);
  REQUIRE(sum == 5.5);
}
