#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "agentrl/policy.hpp"
#include "agentrl/rng.hpp"
#include "oracles.hpp"

using namespace agentrl;

namespace {

std::vector<double> random_features(std::size_t dim, std::uint64_t seed) {
  rng::Stream s(seed);
  std::vector<double> x(dim);
  for (double& v : x) v = 2.0 * s.uniform() - 1.0;
  return x;
}

}  // namespace

TEST_CASE("uniform zero policy gives log(1/V)") {
  ToyPolicy p(3, 4);
  std::vector<double> x{1.0, 0.5, -2.0};
  for (int a = 0; a < 4; ++a) CHECK(p.logprob(x, a) == doctest::Approx(std::log(0.25)).epsilon(1e-15));
}

TEST_CASE("a dominant logit saturates") {
  ParamMatrix w(1, 3);
  w(0, 0) = 50.0;
  ToyPolicy p(w);
  std::vector<double> x{1.0};
  CHECK(std::abs(p.logprob(x, 0)) < 1e-9);
  CHECK(p.logprob(x, 1) < -49.0);
  // gradient of the saturated action vanishes
  CHECK(oracle::max_abs(p.logprob_grad(x, 0)) < 1e-9);
  // saturated sampling is deterministic
  for (std::uint64_t s = 0; s < 200; ++s) CHECK(p.sample_action(x, s) == 0);
}

TEST_CASE("log_probs match a brute-force softmax and sum to one") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    ToyPolicy p = ToyPolicy::random(5, 4, 3.0, seed);
    std::vector<double> x = random_features(5, seed + 1000);
    std::vector<double> lp = p.log_probs(x);
    double total = 0.0;
    for (int a = 0; a < 4; ++a) {
      CHECK(lp[static_cast<std::size_t>(a)] ==
            doctest::Approx(oracle::softmax_logprob(p.params(), x, a)).epsilon(1e-12));
      total += std::exp(lp[static_cast<std::size_t>(a)]);
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("logprob gradient matches central finite differences") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    ToyPolicy p = ToyPolicy::random(4, 3, 2.0, seed);
    std::vector<double> x = random_features(4, seed + 7);
    const int a = static_cast<int>(seed % 3);
    ParamMatrix analytic = p.logprob_grad(x, a);
    ParamMatrix fd = oracle::finite_difference(p.params(), [&](const ParamMatrix& w) {
      return ToyPolicy(w).logprob(x, a);
    });
    CHECK(oracle::relative_error(analytic, fd) < 1e-6);
    CHECK(oracle::max_abs_diff(analytic, oracle::logprob_grad(p.params(), x, a)) < 1e-12);
  }
}

TEST_CASE("two-action uniform gradient is plus or minus one half times the features") {
  ToyPolicy p(2, 2);
  std::vector<double> x{1.0, 3.0};
  ParamMatrix g = p.logprob_grad(x, 0);
  CHECK(g(0, 0) == doctest::Approx(0.5));
  CHECK(g(0, 1) == doctest::Approx(-0.5));
  CHECK(g(1, 0) == doctest::Approx(1.5));
  CHECK(g(1, 1) == doctest::Approx(-1.5));
}

TEST_CASE("accumulate_logprob_grad adds a weighted gradient") {
  ToyPolicy p = ToyPolicy::random(3, 3, 1.0, 5);
  std::vector<double> x{0.0, 1.0, 0.0};
  ParamMatrix acc(3, 3, 1.0);
  p.accumulate_logprob_grad(x, 2, 0.25, acc);
  ParamMatrix expect(3, 3, 1.0);
  expect.axpy(0.25, p.logprob_grad(x, 2));
  CHECK(oracle::max_abs_diff(acc, expect) < 1e-15);
}

TEST_CASE("uniform sampling frequencies are within 3 sigma") {
  ToyPolicy p(1, 4);
  std::vector<double> x{1.0};
  const int n = 100000;
  std::map<int, int> counts;
  for (int i = 0; i < n; ++i) counts[p.sample_action(x, rng::derive({42, static_cast<std::uint64_t>(i)}))]++;
  const double sigma = std::sqrt(n * 0.25 * 0.75);
  for (int a = 0; a < 4; ++a) CHECK(std::abs(counts[a] - n * 0.25) < 3.0 * sigma);
}

TEST_CASE("sampling is a pure function of the seed") {
  ToyPolicy p = ToyPolicy::random(2, 5, 1.0, 9);
  std::vector<double> x{1.0, -1.0};
  for (std::uint64_t s = 0; s < 50; ++s) CHECK(p.sample_action(x, s) == p.sample_action(x, s));
}

TEST_CASE("out-of-range actions and wrong feature sizes are rejected") {
  ToyPolicy p(2, 3);
  std::vector<double> x{1.0, 0.0};
  CHECK_THROWS_AS(p.logprob(x, 3), std::out_of_range);
  CHECK_THROWS_AS(p.logprob(x, -1), std::out_of_range);
  std::vector<double> bad{1.0};
  CHECK_THROWS_AS(p.logprob(bad, 0), std::invalid_argument);
  ParamMatrix nan(1, 2);
  nan(0, 0) = std::nan("");
  CHECK_THROWS_AS(ToyPolicy{nan}, std::invalid_argument);
}

TEST_CASE("zero perturbation reproduces the trainer exactly") {
  ToyPolicy p = ToyPolicy::random(4, 3, 2.0, 3);
  SamplerVariant s(p, SamplerConfig{0.0, 77, std::nullopt});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::vector<double> x = random_features(4, seed);
    for (int a = 0; a < 3; ++a) CHECK(s.logprob(x, a) == p.logprob(x, a));
    CHECK(s.sample_action(x, seed) == p.sample_action(x, seed));
  }
}

TEST_CASE("maximum token ratio does not decrease with perturbation scale") {
  ToyPolicy p = ToyPolicy::random(4, 3, 1.0, 11);
  double prev = 0.0;
  for (double scale : {0.0, 0.5, 1.5}) {
    SamplerVariant s(p, SamplerConfig{scale, 5, std::nullopt});
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      std::vector<double> x = random_features(4, seed);
      for (int a = 0; a < 3; ++a) worst = std::max(worst, std::exp(p.logprob(x, a) - s.logprob(x, a)));
    }
    CHECK(worst >= prev);
    prev = worst;
  }
  CHECK(prev > 1.0);
}

TEST_CASE("logit rounding quantizes to the requested grid") {
  ParamMatrix w(1, 2);
  w(0, 0) = 0.3;
  w(0, 1) = 1.1;
  SamplerVariant s(ToyPolicy(w), SamplerConfig{0.0, 0, 0});
  std::vector<double> x{1.0};
  // logits round to 0 and 1
  const double expect = -std::log(1.0 + std::exp(1.0));
  CHECK(s.logprob(x, 0) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("feature layout saturates turn and offset buckets") {
  FeatureLayout l{2, 3, 2};
  CHECK(l.dim() == 12);
  CHECK(l.index(0, 0, 0) == 0);
  CHECK(l.index(1, 2, 1) == 11);
  CHECK(l.index(0, 9, 0) == l.index(0, 2, 0));
  CHECK(l.index(0, 1, 5) == l.index(0, 1, 1));
  CHECK_THROWS(l.index(2, 0, 0));
  std::vector<double> x = l.features(1, 0, 1);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(x[i] == (i == oracle::feature_index(2, 3, 2, 1, 0, 1) ? 1.0 : 0.0));
}

TEST_CASE("updated takes an ascent step and bumps the version") {
  ToyPolicy p(2, 2, 4);
  ParamMatrix d(2, 2, 1.0);
  ToyPolicy q = p.updated(d, 0.5);
  CHECK(q.version() == 5);
  CHECK(q.params()(1, 1) == 0.5);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  ToyPolicy p = ToyPolicy::random(6, 4, 3.0, 21).updated(ParamMatrix(6, 4, 1.0 / 3.0), 0.1);
  ToyPolicy q = checkpoint_from_text(checkpoint_text(p));
  CHECK(q.params() == p.params());
  CHECK(q.version() == p.version());

  const auto path = std::filesystem::temp_directory_path() / "agentrl_policy.ckpt";
  save_checkpoint(path.string(), p);
  CHECK(load_checkpoint(path.string()).params() == p.params());
  std::filesystem::remove(path);

  CHECK_THROWS(checkpoint_from_text("version 1\nfeature_dim 2\n"));
  CHECK_THROWS(checkpoint_from_text("version 1\nfeature_dim 1\nvocab_size 2\nparams\n0.5\n"));
}
