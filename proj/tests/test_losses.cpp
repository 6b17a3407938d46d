#include <cmath>
#include <vector>

#include "doctest.h"
#include "test_support.hpp"
#include "tlc/error.hpp"
#include "tlc/losses.hpp"

using namespace tlc;
using tlc::test::central_difference;
using tlc::test::max_relative_error;
using tlc::test::random_k;

namespace {

// Strictly positive evidence so a +-1e-6 probe never leaves the domain.
std::vector<double> positive_evidence(Rng& rng, std::size_t k) {
  std::vector<double> e(k);
  for (double& v : e) v = std::exp(rng.uniform(-2.5, 3.0));
  return e;
}

constexpr double kStep = 1e-6;
constexpr double kGradTol = 1e-5;

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("anneal schedule") {
  AnnealSchedule s{10, 0};
  CHECK(s.kl_weight() == 0.0);
  s.current_epoch = 5;
  CHECK(s.kl_weight() == 0.5);
  s.current_epoch = 10;
  CHECK(s.kl_weight() == 1.0);
  s.current_epoch = 50;
  CHECK(s.kl_weight() == 1.0);
}

TEST_CASE("loss config validation") {
  LossConfig c;
  CHECK_NOTHROW(c.validate());
  c.gate_threshold = -0.1;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = LossConfig{};
  c.diversity_weight = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = LossConfig{};
  c.anneal.horizon = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("evidential nll worked examples") {
  CHECK(std::abs(evidential_nll(std::vector<double>{9, 1}, 0) - 0.18232155679395462621) <= 1e-12);
  CHECK(std::abs(evidential_nll(std::vector<double>{0, 0, 0}, 2) - std::log(3.0)) <= 1e-15);
  CHECK(std::abs(evidential_nll(std::vector<double>(10, 0.0), 7) - std::log(10.0)) <= 1e-12);
  CHECK_THROWS_AS(evidential_nll(std::vector<double>{1, 1}, 2), InvalidArgument);
}

TEST_CASE("kl regularizer worked examples") {
  // All evidence on the label: nothing left to penalise.
  CHECK(kl_regularizer(std::vector<double>{7, 0, 0}, 0) == 0.0);
  CHECK(kl_regularizer(std::vector<double>{0, 0, 0}, 1) == 0.0);
  // alpha~ = [1, 2]: ln 2 - 1/2 (quadrature reference).
  CHECK(std::abs(kl_regularizer(std::vector<double>{5, 1}, 0) - 0.19314718055994530942) <= 1e-12);
  CHECK(std::abs(kl_regularizer(std::vector<double>{0, 1}, 0) - 0.19314718055994530942) <= 1e-12);
}

TEST_CASE("single loss combines both terms") {
  const std::vector<double> e{5, 1};
  const double nll = evidential_nll(e, 0), kl = kl_regularizer(e, 0);
  CHECK(single_loss(e, 0, 0.0) == nll);
  CHECK(single_loss(e, 0, 0.25) == doctest::Approx(nll + 0.25 * kl).epsilon(1e-15));
  CHECK(single_loss(e, 0, AnnealSchedule{4, 2}) == doctest::Approx(nll + 0.5 * kl).epsilon(1e-15));
}

TEST_CASE("diversity loss worked examples") {
  const std::vector<std::vector<double>> same{{3, 1, 2}, {3, 1, 2}};
  CHECK(std::abs(diversity_loss(same)) <= 1e-15);
  const std::vector<std::vector<double>> two{{4, 1}, {1, 4}};
  CHECK(std::abs(diversity_loss(two) - (-0.19274475702175742988)) <= 1e-12);
  const std::vector<std::vector<double>> one{{4, 1}};
  CHECK(diversity_loss(one) == 0.0);
}

TEST_CASE("losses are non-negative / diversity non-positive on random inputs") {
  Rng rng(21);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = random_k(rng, 2, 20);
    const auto e = tlc::test::random_evidence(rng, k);
    const std::size_t y = rng.below(k);
    CHECK(evidential_nll(e, y) > 0.0);
    CHECK(kl_regularizer(e, y) >= 0.0);
    std::vector<std::vector<double>> alphas;
    for (std::size_t m = 0, n = random_k(rng, 1, 5); m < n; ++m) {
      alphas.push_back(tlc::test::random_evidence(rng, k));
      for (double& a : alphas.back()) a += 1.0;
    }
    CHECK(diversity_loss(alphas) <= 1e-15);
  }
}

TEST_CASE("nll gradient matches finite differences") {
  Rng rng(22);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = random_k(rng, 2, 12), y = rng.below(k);
    const auto e = positive_evidence(rng, k);
    const auto fd = central_difference([&](const auto& x) { return evidential_nll(x, y); }, e, kStep);
    CHECK(max_relative_error(grad_evidential_nll(e, y), fd) <= kGradTol);
  }
}

TEST_CASE("kl gradient matches finite differences and vanishes on the label") {
  Rng rng(23);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = random_k(rng, 2, 12), y = rng.below(k);
    const auto e = positive_evidence(rng, k);
    const auto g = grad_kl_regularizer(e, y);
    CHECK(g[y] == 0.0);
    const auto fd = central_difference([&](const auto& x) { return kl_regularizer(x, y); }, e, kStep);
    CHECK(max_relative_error(g, fd) <= kGradTol);
  }
}

TEST_CASE("single loss gradient matches finite differences") {
  Rng rng(24);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = random_k(rng, 2, 12), y = rng.below(k);
    const double w = rng.uniform();
    const auto e = positive_evidence(rng, k);
    const auto fd = central_difference([&](const auto& x) { return single_loss(x, y, w); }, e, kStep);
    CHECK(max_relative_error(grad_single_loss(e, y, w), fd) <= kGradTol);
  }
}

TEST_CASE("diversity gradient matches finite differences") {
  Rng rng(25);
  for (int t = 0; t < 100; ++t) {
    const std::size_t k = random_k(rng, 2, 8), m = random_k(rng, 2, 4);
    std::vector<double> flat;
    for (std::size_t i = 0; i < m * k; ++i) flat.push_back(1.0 + std::exp(rng.uniform(-2.5, 3.0)));
    auto unflatten = [&](const std::vector<double>& x) {
      std::vector<std::vector<double>> a(m);
      for (std::size_t i = 0; i < m; ++i) a[i].assign(x.begin() + i * k, x.begin() + (i + 1) * k);
      return a;
    };
    const auto fd = central_difference([&](const auto& x) { return diversity_loss(unflatten(x)); }, flat, kStep);
    std::vector<double> g;
    for (const auto& row : grad_diversity_loss(unflatten(flat))) g.insert(g.end(), row.begin(), row.end());
    CHECK(max_relative_error(g, fd) <= kGradTol);
  }
}

TEST_CASE("joint loss gradient matches finite differences") {
  Rng rng(26);
  LossConfig cfg;
  cfg.anneal = {10, 4};
  cfg.diversity_weight = 0.3;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = random_k(rng, 1, 4), m = random_k(rng, 1, 3), k = random_k(rng, 2, 6);
    std::vector<std::size_t> labels(n);
    GateMask mask(n, std::vector<unsigned char>(m));
    std::vector<double> flat;
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = rng.below(k);
      for (std::size_t j = 0; j < m; ++j) mask[i][j] = j == 0 || rng.uniform() < 0.5;
    }
    for (std::size_t i = 0; i < n * m * k; ++i) flat.push_back(std::exp(rng.uniform(-2.5, 3.0)));
    auto unflatten = [&](const std::vector<double>& x) {
      std::vector<ExpertEvidence> ev(n, ExpertEvidence(m));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
          ev[i][j].assign(x.begin() + (i * m + j) * k, x.begin() + (i * m + j + 1) * k);
      return ev;
    };
    const auto fd = central_difference(
        [&](const auto& x) { return joint_loss(unflatten(x), labels, mask, cfg); }, flat, kStep);
    std::vector<double> g;
    for (const auto& s : grad_joint_loss(unflatten(flat), labels, mask, cfg))
      for (const auto& row : s) g.insert(g.end(), row.begin(), row.end());
    CHECK(max_relative_error(g, fd) <= kGradTol);
  }
}

TEST_CASE("gate mask") {
  FusionTrace a;
  a.prefix_weights = {1.0, 0.6, 0.5};
  FusionTrace b;
  b.prefix_weights = {1.0, 0.2, 0.1};
  const std::vector<FusionTrace> traces{a, b};

  LossConfig cfg;
  const auto mask = gate_mask(traces, cfg);
  CHECK(mask[0] == std::vector<unsigned char>{1, 1, 0});
  CHECK(mask[1] == std::vector<unsigned char>{1, 0, 0});

  cfg.gate_threshold = 1.0;
  CHECK(gate_mask(traces, cfg)[0] == std::vector<unsigned char>{1, 0, 0});

  cfg.gating_enabled = false;
  CHECK(gate_mask(traces, cfg)[1] == std::vector<unsigned char>{1, 1, 1});
}

TEST_CASE("gated-out experts receive zero gradient") {
  LossConfig cfg;
  cfg.diversity_weight = 0.0;
  const std::vector<ExpertEvidence> ev{{{1, 2, 3}, {4, 0.5, 1}, {2, 2, 2}}};
  const std::vector<std::size_t> labels{1};
  const GateMask mask{{1, 0, 1}};
  const auto g = grad_joint_loss(ev, labels, mask, cfg);
  CHECK(g[0][1] == std::vector<double>{0, 0, 0});
  CHECK(g[0][0] != std::vector<double>{0, 0, 0});

  // And the masked value only counts engaged experts.
  const double expected = single_loss(ev[0][0], 1, cfg.anneal) + single_loss(ev[0][2], 1, cfg.anneal);
  CHECK(joint_loss(ev, labels, mask, cfg) == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("disabling kl removes the regularizer") {
  LossConfig cfg;
  cfg.anneal = {1, 5};
  cfg.kl_enabled = false;
  cfg.diversity_weight = 0.0;
  const std::vector<ExpertEvidence> ev{{{1, 2, 3}}};
  const std::vector<std::size_t> labels{0};
  const GateMask mask{{1}};
  CHECK(joint_loss(ev, labels, mask, cfg) == evidential_nll(ev[0][0], 0));
}

TEST_CASE("joint loss shape errors") {
  LossConfig cfg;
  const std::vector<ExpertEvidence> ev{{{1, 2}, {1, 2}}};
  const std::vector<std::size_t> labels{0, 1};
  CHECK_THROWS_AS(joint_loss(ev, labels, GateMask{{1, 1}}, cfg), InvalidArgument);
  const std::vector<std::size_t> one{0};
  CHECK_THROWS_AS(joint_loss(ev, one, GateMask{{1}}, cfg), InvalidArgument);
}

}  // TEST_SUITE
