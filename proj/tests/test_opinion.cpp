#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "tlc/error.hpp"
#include "tlc/opinion.hpp"

using namespace tlc;
using tlc::test::random_evidence;
using tlc::test::random_k;

namespace {

// Independent O(K^2) enumeration of the cross terms.
double conflict_brute_force(const std::vector<double>& b1, const std::vector<double>& b2) {
  double c = 0.0;
  for (std::size_t i = 0; i < b1.size(); ++i)
    for (std::size_t j = 0; j < b2.size(); ++j)
      if (i != j) c += b1[i] * b2[j];
  return c;
}

std::vector<DirichletOpinion> opinions_of(const std::vector<std::vector<double>>& es) {
  std::vector<DirichletOpinion> out;
  for (const auto& e : es) out.push_back(opinion_from_evidence(e));
  return out;
}

}  // namespace

TEST_SUITE("opinion") {

TEST_CASE("opinion_from_evidence worked examples") {
  auto vac = opinion_from_evidence(std::vector<double>{0, 0, 0});
  CHECK(vac.uncertainty == 1.0);
  CHECK(vac.belief == std::vector<double>{0, 0, 0});

  auto o = opinion_from_evidence(std::vector<double>{1, 2, 3});
  CHECK(o.strength == doctest::Approx(9.0).epsilon(1e-15));
  CHECK(o.uncertainty == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(o.belief[0] == doctest::Approx(1.0 / 9.0).epsilon(1e-15));
  CHECK(o.belief[1] == doctest::Approx(2.0 / 9.0).epsilon(1e-15));
  CHECK(o.belief[2] == doctest::Approx(3.0 / 9.0).epsilon(1e-15));
  CHECK(o.alpha == std::vector<double>{2, 3, 4});

  auto o2 = opinion_from_evidence(std::vector<double>{4, 0});
  CHECK(o2.strength == 6.0);
  CHECK(o2.uncertainty == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(o2.belief[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(o2.belief[1] == 0.0);
}

TEST_CASE("opinion_from_evidence rejects bad evidence") {
  CHECK_THROWS_AS(opinion_from_evidence(std::vector<double>{1.0}), InvalidArgument);
  CHECK_THROWS_AS(opinion_from_evidence(std::vector<double>{1.0, -0.5}), InvalidArgument);
  CHECK_THROWS_AS(opinion_from_evidence(std::vector<double>{1.0, NAN}), InvalidArgument);
  CHECK_THROWS_AS(opinion_from_evidence(std::vector<double>{INFINITY, 0.0}), InvalidArgument);
}

TEST_CASE("mass invariant on random evidence") {
  Rng rng(1);
  for (int t = 0; t < 2000; ++t) {
    const auto e = random_evidence(rng, random_k(rng, 2, 50));
    const auto o = opinion_from_evidence(e);
    double mass = o.uncertainty;
    for (double b : o.belief) {
      mass += b;
      CHECK(b >= 0.0);
      CHECK(b < 1.0);
    }
    REQUIRE(std::abs(mass - 1.0) <= 1e-12);
    CHECK(o.uncertainty > 0.0);
    CHECK(o.uncertainty <= 1.0);
  }
}

TEST_CASE("combine_pair worked examples") {
  const auto vac = opinion_from_evidence(std::vector<double>{0, 0, 0});
  const auto a = opinion_from_evidence(std::vector<double>{2, 1, 0});
  const auto b = opinion_from_evidence(std::vector<double>{0, 1, 2});

  const auto id = combine_pair(a, vac);
  CHECK(id.conflict == 0.0);
  CHECK(id.uncertainty == doctest::Approx(a.uncertainty).epsilon(1e-15));

  const auto ab = combine_pair(a, b);
  CHECK(std::abs(ab.conflict - 2.0 / 9.0) <= 1e-12);
  CHECK(std::abs(ab.uncertainty - 9.0 / 28.0) <= 1e-12);

  const auto aa = combine_pair(a, a);
  CHECK(std::abs(aa.conflict - 1.0 / 9.0) <= 1e-12);
  CHECK(std::abs(aa.uncertainty - 0.28125) <= 1e-12);
}

TEST_CASE("conflict matches brute-force enumeration") {
  Rng rng(2);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = random_k(rng, 2, 30);
    const auto o1 = opinion_from_evidence(random_evidence(rng, k));
    const auto o2 = opinion_from_evidence(random_evidence(rng, k));
    CHECK(std::abs(conflict(o1.belief, o2.belief) - conflict_brute_force(o1.belief, o2.belief)) <=
          1e-12);
  }
}

TEST_CASE("combine_pair is commutative and never raises uncertainty") {
  Rng rng(3);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = random_k(rng, 2, 50);
    const auto o1 = opinion_from_evidence(random_evidence(rng, k));
    const auto o2 = opinion_from_evidence(random_evidence(rng, k));
    const auto p = combine_pair(o1, o2);
    const auto q = combine_pair(o2, o1);
    CHECK(std::abs(p.uncertainty - q.uncertainty) < 1e-12);
    CHECK(std::abs(p.conflict - q.conflict) < 1e-12);
    CHECK(p.conflict >= 0.0);
    CHECK(p.conflict < 1.0);
    CHECK(p.uncertainty <= std::min(o1.uncertainty, o2.uncertainty) + 1e-12);
  }
}

TEST_CASE("combine_pair rejects mismatched K") {
  const auto a = opinion_from_evidence(std::vector<double>{1, 2});
  const auto b = opinion_from_evidence(std::vector<double>{1, 2, 3});
  CHECK_THROWS_AS(combine_pair(a, b), InvalidArgument);
}

TEST_CASE("combine_sequential worked examples") {
  const auto a = opinion_from_evidence(std::vector<double>{2, 1, 0});
  const auto b = opinion_from_evidence(std::vector<double>{0, 1, 2});
  const auto vac = opinion_from_evidence(std::vector<double>{0, 0, 0});

  SUBCASE("single expert") {
    const std::vector<DirichletOpinion> one{a};
    const auto t = combine_sequential(one);
    CHECK(t.joint_uncertainty == a.uncertainty);
    CHECK(t.prefix_weights == std::vector<double>{1.0});
    CHECK(t.conflicts == std::vector<double>{0.0});
  }
  SUBCASE("two experts reduce to the pairwise rule") {
    const std::vector<DirichletOpinion> two{a, b};
    const auto t = combine_sequential(two);
    CHECK(std::abs(t.joint_uncertainty - combine_pair(a, b).uncertainty) <= 1e-15);
    CHECK(std::abs(t.joint_uncertainty - 9.0 / 28.0) <= 1e-12);
  }
  SUBCASE("a vacuous third expert changes nothing") {
    const std::vector<DirichletOpinion> two{a, b};
    const std::vector<DirichletOpinion> three{a, b, vac};
    const auto t2 = combine_sequential(two);
    const auto t3 = combine_sequential(three);
    CHECK(t3.conflicts[2] == 0.0);
    CHECK(std::abs(t3.joint_uncertainty - t2.joint_uncertainty) <= 1e-15);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(combine_sequential(std::vector<DirichletOpinion>{}), InvalidArgument);
    const std::vector<DirichletOpinion> mixed{a, opinion_from_evidence(std::vector<double>{1, 1})};
    CHECK_THROWS_AS(combine_sequential(mixed), InvalidArgument);
  }
}

TEST_CASE("prefix_weights worked examples") {
  const auto w1 = prefix_weights(opinions_of({{1, 2, 3}, {0, 0, 5}}));
  CHECK(w1[0] == 1.0);
  CHECK(std::abs(w1[1] - 1.0 / 3.0) <= 1e-15);

  const auto w = prefix_weights(opinions_of({{2, 1, 0}, {2, 1, 0}, {0, 0, 0}}));
  CHECK(w.size() == 3);
  CHECK(w[0] == 1.0);
  CHECK(w[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(w[2] - 0.28125) <= 1e-12);
}

TEST_CASE("prefix weights are non-increasing in (0, 1] and the fold equals the closed form") {
  Rng rng(4);
  for (int t = 0; t < 500; ++t) {
    const std::size_t k = random_k(rng, 2, 20);
    const std::size_t m = random_k(rng, 1, 6);
    std::vector<DirichletOpinion> ops;
    for (std::size_t i = 0; i < m; ++i) ops.push_back(opinion_from_evidence(random_evidence(rng, k)));
    const auto trace = combine_sequential(ops);

    CHECK(trace.prefix_weights[0] == 1.0);
    CHECK(trace.conflicts[0] == 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(trace.prefix_weights[i] > 0.0);
      CHECK(trace.prefix_weights[i] <= 1.0);
      if (i > 0) CHECK(trace.prefix_weights[i] <= trace.prefix_weights[i - 1]);
      CHECK(trace.conflicts[i] >= 0.0);
      CHECK(trace.conflicts[i] < 1.0);
    }

    // prod u^m / prod (1 - C^m), conflicts recomputed by enumeration.
    double num = 1.0, den = 1.0;
    double min_u = 1.0;
    for (std::size_t i = 0; i < m; ++i) {
      num *= ops[i].uncertainty;
      if (i > 0) den *= 1.0 - conflict_brute_force(ops[i].belief, ops[i - 1].belief);
      min_u = std::min(min_u, ops[i].uncertainty);
    }
    CHECK(std::abs(trace.joint_uncertainty - num / den) <= 1e-12);
    CHECK(trace.joint_uncertainty <= min_u + 1e-12);
  }
}

TEST_CASE("fuse_evidence") {
  FusionConfig cfg;
  cfg.temperature = 1.0;

  SUBCASE("single expert passes through") {
    const std::vector<std::vector<double>> es{{1.5, 0.0, 2.0}};
    CHECK(fuse_evidence(es, std::vector<double>{1.0}, cfg) == es[0]);
  }
  SUBCASE("equal weights average") {
    const std::vector<std::vector<double>> es{{1, 2}, {3, 6}, {5, 1}};
    const auto f = fuse_evidence(es, std::vector<double>{0.3, 0.3, 0.3}, cfg);
    CHECK(f[0] == doctest::Approx(3.0).epsilon(1e-14));
    CHECK(f[1] == doctest::Approx(3.0).epsilon(1e-14));
  }
  SUBCASE("worked example w=[1,0], eta=1") {
    const std::vector<std::vector<double>> es{{4, 0}, {0, 4}};
    const auto f = fuse_evidence(es, std::vector<double>{1.0, 0.0}, cfg);
    CHECK(std::abs(f[0] - 2.924234314520019517) <= 1e-12);
    CHECK(std::abs(f[1] - 1.075765685479980483) <= 1e-12);
  }
  SUBCASE("shift invariance in the weights") {
    Rng rng(5);
    cfg.temperature = 0.1;
    for (int t = 0; t < 200; ++t) {
      const std::size_t k = random_k(rng, 2, 10), m = random_k(rng, 1, 5);
      std::vector<std::vector<double>> es;
      std::vector<double> w, shifted;
      const double c = rng.uniform(-2.0, 2.0);
      for (std::size_t i = 0; i < m; ++i) {
        es.push_back(random_evidence(rng, k));
        w.push_back(rng.uniform());
        shifted.push_back(w.back() + c);
      }
      const auto a = fuse_evidence(es, w, cfg);
      const auto b = fuse_evidence(es, shifted, cfg);
      for (std::size_t j = 0; j < k; ++j) {
        CHECK(a[j] >= 0.0);
        CHECK(std::abs(a[j] - b[j]) <= 1e-12 * std::max(1.0, std::abs(a[j])) * 100);
      }
    }
  }
  SUBCASE("errors") {
    const std::vector<std::vector<double>> es{{1, 2}, {3, 4}};
    FusionConfig bad;
    bad.temperature = 0.0;
    CHECK_THROWS_AS(fuse_evidence(es, std::vector<double>{1, 0}, bad), InvalidArgument);
    CHECK_THROWS_AS(fuse_evidence(es, std::vector<double>{1}, cfg), InvalidArgument);
    const std::vector<std::vector<double>> ragged{{1, 2}, {3, 4, 5}};
    CHECK_THROWS_AS(fuse_evidence(ragged, std::vector<double>{1, 0}, cfg), InvalidArgument);
  }
}

TEST_CASE("predict") {
  const auto p0 = predict(std::vector<double>{0, 0});
  CHECK(p0.label == 0);
  CHECK(p0.uncertainty == 1.0);
  CHECK(p0.probs == std::vector<double>{0.5, 0.5});

  const auto p1 = predict(std::vector<double>{9, 1});
  CHECK(p1.label == 0);
  CHECK(p1.probs[0] == doctest::Approx(10.0 / 12.0).epsilon(1e-15));
  CHECK(p1.probs[1] == doctest::Approx(2.0 / 12.0).epsilon(1e-15));

  const auto p2 = predict(std::vector<double>{1, 2, 3});
  CHECK(p2.label == 2);
  CHECK(p2.uncertainty == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  CHECK(predict(std::vector<double>{0, 3, 3}).label == 1);
  CHECK_THROWS_AS(predict(std::vector<double>{-1, 3}), InvalidArgument);
}

TEST_CASE("predict argmax is scale invariant and probs sum to one") {
  Rng rng(6);
  for (int t = 0; t < 500; ++t) {
    auto e = random_evidence(rng, random_k(rng, 2, 20));
    const auto p = predict(e);
    double s = 0.0;
    for (double v : p.probs) s += v;
    CHECK(std::abs(s - 1.0) <= 1e-12);
    const double c = std::exp(rng.uniform(-3.0, 3.0));
    for (double& v : e) v *= c;
    CHECK(predict(e).label == p.label);
  }
}

TEST_CASE("engaged_count floors at one") {
  const std::vector<double> w{1.0, 0.6, 0.3};
  CHECK(engaged_count(w, 0.0) == 3);
  CHECK(engaged_count(w, 0.54) == 2);
  CHECK(engaged_count(w, 1.0) == 1);
  CHECK(engaged_count(w, 0.99) == 1);
}

}  // TEST_SUITE
