#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "htc/optics.hpp"

using namespace htc;

namespace {

// deterministic uniform stream shared with the reference-run fixtures
struct Lcg {
  uint64_t s;
  explicit Lcg(uint64_t seed) : s(seed) {}
  double operator()() {
    s = s * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<double>(s >> 11) / 9007199254740992.0;  // 2^53
  }
};

// one far outlier plus two jittered 5x6 grids 50 units apart
MatrixRM two_blob_fixture() {
  Lcg u(42);
  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(200.0, 200.0);
  for (int gy = 0; gy < 6; ++gy)
    for (int gx = 0; gx < 5; ++gx) {
      double x = gx + 0.2 * u() - 0.1;
      double y = gy + 0.2 * u() - 0.1;
      pts.emplace_back(x, y);
    }
  for (int gy = 0; gy < 6; ++gy)
    for (int gx = 0; gx < 5; ++gx) {
      double x = 50.0 + gx + 0.2 * u() - 0.1;
      double y = gy + 0.2 * u() - 0.1;
      pts.emplace_back(x, y);
    }
  MatrixRM m(static_cast<Eigen::Index>(pts.size()), 2);
  for (size_t i = 0; i < pts.size(); ++i) {
    m(static_cast<Eigen::Index>(i), 0) = pts[i].first;
    m(static_cast<Eigen::Index>(i), 1) = pts[i].second;
  }
  return m;
}

MatrixRM single_blob_fixture() {
  Lcg u(7);
  MatrixRM m(40, 2);
  int i = 0;
  for (int gy = 0; gy < 8; ++gy)
    for (int gx = 0; gx < 5; ++gx, ++i) {
      m(i, 0) = gx + 0.2 * u() - 0.1;
      m(i, 1) = gy + 0.2 * u() - 0.1;
    }
  return m;
}

}  // namespace

TEST_SUITE("optics") {

TEST_CASE("two separated blobs with an outlier match the reference run") {
  // expected labels reproduce scikit-learn 1.7.2 OPTICS(min_samples=5, xi=0.05)
  // on the byte-identical fixture
  MatrixRM pts = two_blob_fixture();
  OpticsResult res = optics(pts, 5, 0.05);
  CHECK(res.n_clusters == 2);
  CHECK(res.labels[0] == -1);  // the outlier is noise
  for (int i = 1; i <= 30; ++i) CHECK(res.labels[static_cast<size_t>(i)] == 1);
  for (int i = 31; i <= 60; ++i) CHECK(res.labels[static_cast<size_t>(i)] == 0);
}

TEST_CASE("a single uniform blob yields one cluster and no noise") {
  OpticsResult res = optics(single_blob_fixture(), 5, 0.05);
  CHECK(res.n_clusters == 1);
  for (int l : res.labels) CHECK(l == 0);
}

TEST_CASE("ordering is a permutation starting from the first point") {
  MatrixRM pts = two_blob_fixture();
  OpticsResult res = optics(pts, 5, 0.05);
  REQUIRE(res.ordering.size() == static_cast<size_t>(pts.rows()));
  std::set<int> seen(res.ordering.begin(), res.ordering.end());
  CHECK(seen.size() == res.ordering.size());
  CHECK(*seen.begin() == 0);
  CHECK(res.ordering[0] == 0);  // all reachabilities start undefined; lowest index wins
  CHECK(std::isinf(res.reachability[static_cast<size_t>(res.ordering[0])]));
  CHECK(res.predecessor[static_cast<size_t>(res.ordering[0])] == -1);
}

TEST_CASE("core distance is the distance to the min_samples-th nearest point") {
  MatrixRM pts(5, 1);
  pts << 0.0, 1.0, 2.0, 3.0, 100.0;
  OpticsResult res = optics(pts, 3, 0.05);
  // for point 1 the three nearest (self included) are {1, 0 or 2} -> distance 1
  CHECK(res.core_distance[1] == 1.0);
  CHECK(res.core_distance[0] == 2.0);   // self, 1, 2
  CHECK(res.core_distance[4] == 98.0);  // self, 3, 2
}

TEST_CASE("reachability of in-cluster points stays below the blob spacing") {
  MatrixRM pts = single_blob_fixture();
  OpticsResult res = optics(pts, 5, 0.05);
  int finite = 0;
  for (double r : res.reachability)
    if (std::isfinite(r)) {
      ++finite;
      CHECK(r < 3.0);
    }
  CHECK(finite == static_cast<int>(pts.rows()) - 1);  // only the seed stays undefined
}

TEST_CASE("cluster ranges cover exactly the labeled ordering positions") {
  MatrixRM pts = two_blob_fixture();
  OpticsResult res = optics(pts, 5, 0.05);
  std::vector<int> covered(static_cast<size_t>(pts.rows()), 0);
  for (const auto& [s, e] : res.clusters) {
    REQUIRE(s >= 0);
    REQUIRE(e >= s);
    REQUIRE(e < static_cast<int>(pts.rows()));
    for (int i = s; i <= e; ++i) ++covered[static_cast<size_t>(i)];
  }
  for (Eigen::Index p = 0; p < pts.rows(); ++p) {
    // labeled points must sit inside at least one extracted range
    size_t plot_pos = 0;
    while (res.ordering[plot_pos] != static_cast<int>(p)) ++plot_pos;
    if (res.labels[static_cast<size_t>(p)] >= 0) CHECK(covered[plot_pos] >= 1);
  }
}

TEST_CASE("parameter validation") {
  MatrixRM pts = single_blob_fixture();
  CHECK_THROWS_AS(optics(pts, 1, 0.05), std::runtime_error);
  CHECK_THROWS_AS(optics(pts, 5, 0.0), std::runtime_error);
  CHECK_THROWS_AS(optics(pts, 5, 1.0), std::runtime_error);
  CHECK_THROWS_AS(optics(MatrixRM(0, 2), 5, 0.05), std::runtime_error);
}

TEST_CASE("a sample smaller than min_samples is all noise") {
  MatrixRM pts(3, 2);
  pts << 0.0, 0.0, 1.0, 0.0, 2.0, 0.0;
  OpticsResult res = optics(pts, 5, 0.05);
  CHECK(res.n_clusters == 0);
  for (int l : res.labels) CHECK(l == -1);
  for (double c : res.core_distance) CHECK(std::isinf(c));
}

}  // TEST_SUITE
