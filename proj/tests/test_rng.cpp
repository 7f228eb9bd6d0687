#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "fedtrust/rng.hpp"

using namespace fedtrust;

TEST_CASE("same seed and label give identical sequences") {
  RngStream a = RngStream::from_seed(42).child("x");
  RngStream b = RngStream::from_seed(42).child("x");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different labels give different sequences") {
  RngStream a = RngStream::from_seed(42).child("x");
  RngStream b = RngStream::from_seed(42).child("y");
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("child derivation is order independent") {
  RngStream root = RngStream::from_seed(7);
  RngStream a1 = root.child("a");
  root.child("b").next_u64();  // deriving b does not disturb a
  RngStream a2 = root.child("a");
  CHECK(a1.next_u64() == a2.next_u64());
}

TEST_CASE("u01 stays in [0,1) and below() stays in range") {
  RngStream s = RngStream::from_seed(3);
  for (int i = 0; i < 10000; ++i) {
    double u = s.u01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(s.below(17) < 17);
  }
}

TEST_CASE("normal moments") {
  RngStream s = RngStream::from_seed(11);
  const int n = 200000;
  double sum = 0, sq = 0;
  for (int i = 0; i < n; ++i) {
    double x = s.normal();
    sum += x;
    sq += x * x;
  }
  double mean = sum / n;
  double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("gamma moments for small and large shape") {
  RngStream s = RngStream::from_seed(5);
  for (double alpha : {0.4, 1.0, 3.5}) {
    const int n = 100000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      double x = s.gamma(alpha);
      CHECK(x > 0.0);
      sum += x;
      sq += x * x;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(alpha).epsilon(0.03));
    CHECK(var == doctest::Approx(alpha).epsilon(0.06));
  }
}

TEST_CASE("permutation is a permutation and shuffles uniformly enough") {
  RngStream s = RngStream::from_seed(9);
  auto p = s.permutation(100);
  std::set<int> seen(p.begin(), p.end());
  CHECK(seen.size() == 100);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 99);

  // position of element 0 should be roughly uniform
  int low = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    auto q = s.permutation(10);
    int pos = int(std::find(q.begin(), q.end(), 0) - q.begin());
    low += pos < 5;
  }
  CHECK(low > 800);
  CHECK(low < 1200);
}

TEST_CASE("sample_without_replacement gives k distinct in-range values") {
  RngStream s = RngStream::from_seed(13);
  auto v = s.sample_without_replacement(50, 12);
  CHECK(v.size() == 12);
  std::set<int> seen(v.begin(), v.end());
  CHECK(seen.size() == 12);
  for (int x : v) {
    CHECK(x >= 0);
    CHECK(x < 50);
  }
}
