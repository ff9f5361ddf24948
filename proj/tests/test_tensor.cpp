#include "cfb/tensor.hpp"

#include "doctest.h"

using cfb::Index;
using cfb::Shape;
using cfb::Tensor;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("construction zero-fills and tracks shape") {
  Tensor<float> t({2, 3, 4});
  CHECK(t.size() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.extent(1) == 3);
  for (Index i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0f);
}

TEST_CASE("invalid extents are rejected") {
  CHECK_THROWS_AS(Tensor<float>({2, 0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor<float>({-1}), std::invalid_argument);
}

TEST_CASE("value constructor checks the count") {
  Tensor<double> t({2, 2}, {1.0, 2.0, 3.0, 4.0});
  CHECK(t[3] == 4.0);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, {1.0}), std::invalid_argument);
}

TEST_CASE("matrix view requires an exact cover") {
  Tensor<float> t({6});
  CHECK(t.matrix(2, 3).rows() == 2);
  CHECK_THROWS_AS(t.matrix(4, 2), std::logic_error);
}

TEST_CASE("matrix view is row-major over the flat buffer") {
  Tensor<float> t({2, 3}, {0, 1, 2, 3, 4, 5});
  auto m = t.matrix(2, 3);
  CHECK(m(0, 2) == 2.0f);
  CHECK(m(1, 0) == 3.0f);
}

TEST_CASE("reshape keeps the element count") {
  Tensor<float> t({4, 2});
  t.reshape({2, 2, 2});
  CHECK(t.rank() == 3);
  CHECK_THROWS_AS(t.reshape({3, 3}), std::invalid_argument);
}

TEST_CASE("all_finite flags NaN and infinity") {
  Tensor<double> t({3});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_SUITE_END();
