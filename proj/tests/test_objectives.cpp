#include "wgnn/objectives.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace wgnn;
using cd = std::complex<double>;

namespace {

CMatrix random_cmatrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  CMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = {g(rng), g(rng)};
  return m;
}

// Evaluate the tape route for one sample and return per-user rates.
std::vector<double> tape_rates(const CMatrix& H, const CMatrix& W, double sigma2) {
  ad::Tape tape;
  const ChannelBatch batch = make_channel_batch(std::vector<CMatrix>{H});
  ad::Tensor re, im;
  beams_to_rows(W, re, im);
  BeamVars b{tape.constant(re), tape.constant(im)};
  const ad::Tensor r = user_rates(tape, batch, b, sigma2).value();
  return {r.data().begin(), r.data().end()};
}

double tape_utility(const UtilitySpec& spec, const CMatrix& H, const CMatrix& W) {
  ad::Tape tape;
  const ChannelBatch batch = make_channel_batch(std::vector<CMatrix>{H});
  ad::Tensor re, im;
  beams_to_rows(W, re, im);
  BeamVars b{tape.constant(re), tape.constant(im)};
  return sample_utility(tape, batch, b, spec).value()[0];
}

}  // namespace

TEST_CASE("utility names") {
  CHECK(parse_utility("srm") == UtilityKind::srm);
  CHECK(parse_utility("eem") == UtilityKind::eem);
  CHECK(parse_utility("mmr") == UtilityKind::mmr);
  CHECK(to_string(UtilityKind::mmr) == "mmr");
  CHECK_THROWS_AS(parse_utility("foo"), std::invalid_argument);
  UtilitySpec s;
  s.circuit_power = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("single user with SINR 1 has rate 1") {
  CMatrix H(1, 2);
  H << 1.0, 0.0;
  CMatrix W(2, 1);
  W << 1.0, 0.0;
  const auto r = user_rates(H, W, 1.0);
  REQUIRE(r.size() == 1);
  CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(tape_rates(H, W, 1.0)[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("zero beams give zero rates") {
  std::mt19937_64 rng(1);
  const CMatrix H = random_cmatrix(3, 4, rng);
  const CMatrix W = CMatrix::Zero(4, 3);
  for (double r : user_rates(H, W, 1.0)) CHECK(r == 0.0);
  for (double r : tape_rates(H, W, 1.0)) CHECK(r == 0.0);
}

TEST_CASE("orthogonal users at half power each") {
  // h1=[1,0], h2=[0,1], w1=[sqrt(P/2),0], w2=[0,sqrt(P/2)] -> SINR = (P/2)/sigma2
  const double P = 10.0, s2 = 1.0;
  CMatrix H = CMatrix::Identity(2, 2);
  CMatrix W = CMatrix::Identity(2, 2) * std::sqrt(P / 2.0);
  const double expect = std::log2(1.0 + P / (2.0 * s2));
  for (double r : user_rates(H, W, s2)) CHECK(r == doctest::Approx(expect).epsilon(1e-14));
  for (double r : tape_rates(H, W, s2)) CHECK(r == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("interference enters the denominator") {
  // K=2, N=1, h=[1;1], w=[a, b]: SINR_1 = a^2/(b^2+s2)
  CMatrix H(2, 1);
  H << 1.0, 1.0;
  CMatrix W(1, 2);
  W << 2.0, 1.0;
  const auto r = user_rates(H, W, 0.5);
  CHECK(r[0] == doctest::Approx(std::log2(1.0 + 4.0 / 1.5)));
  CHECK(r[1] == doctest::Approx(std::log2(1.0 + 1.0 / 4.5)));
}

TEST_CASE("sum, min and energy efficiency") {
  const std::vector<double> r{1.0, 2.0, 3.0};
  CHECK(sum_rate(r) == 6.0);
  CHECK(min_rate(r) == 1.0);
  CMatrix W(1, 1);
  W << 1.0;
  CHECK(energy_efficiency(std::vector<double>{2.0}, W, 1.0) == 1.0);
  CHECK(energy_efficiency(std::vector<double>{0.0}, CMatrix::Zero(2, 2), 1.0) == 0.0);

  ad::Tape tape;
  ad::Var v = tape.variable(ad::Tensor::vector({1.0, 2.0, 3.0}));
  CHECK(sum_rate(v).value().item() == 6.0);
  CHECK(min_rate(v).value().item() == 1.0);
}

TEST_CASE("min_rate subgradient goes to the first argmin") {
  ad::Tape tape;
  ad::Var v = tape.variable(ad::Tensor::vector({2.0, 1.0, 1.0}));
  tape.backward(min_rate(v));
  const ad::Tensor g = tape.grad(v);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 0.0);
}

TEST_CASE("plain and tape routes agree on random instances") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const int K = 1 + t % 5, N = 1 + (t * 3) % 7;
    const CMatrix H = random_cmatrix(K, N, rng);
    const CMatrix W = random_cmatrix(N, K, rng);
    const auto a = user_rates(H, W, 0.7);
    const auto b = tape_rates(H, W, 0.7);
    for (int k = 0; k < K; ++k) CHECK(b[static_cast<std::size_t>(k)] == doctest::Approx(a[static_cast<std::size_t>(k)]).epsilon(1e-12));
    for (UtilityKind kind : {UtilityKind::srm, UtilityKind::eem, UtilityKind::mmr}) {
      const UtilitySpec spec{kind, 0.7, 10.0, 1.5};
      CHECK(tape_utility(spec, H, W) == doctest::Approx(utility_value(spec, H, W)).epsilon(1e-12));
    }
  }
}

TEST_CASE("rates are invariant to per-column phase rotation") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
  for (int t = 0; t < 20; ++t) {
    const CMatrix H = random_cmatrix(4, 6, rng);
    const CMatrix W = random_cmatrix(6, 4, rng);
    CMatrix R = W;
    for (Eigen::Index k = 0; k < 4; ++k) R.col(k) *= std::polar(1.0, ph(rng));
    const auto a = user_rates(H, W, 1.0);
    const auto b = user_rates(H, R, 1.0);
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-10);
  }
}

TEST_CASE("rates are nonnegative and sum >= K * min") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    const CMatrix H = random_cmatrix(4, 8, rng);
    const CMatrix W = random_cmatrix(8, 4, rng);
    const auto r = user_rates(H, W, 1.0);
    for (double x : r) CHECK(x >= 0.0);
    CHECK(sum_rate(r) >= 4.0 * min_rate(r) - 1e-12);
  }
}

TEST_CASE("power activation examples") {
  CMatrix W = CMatrix::Zero(2, 2);
  W(0, 0) = 2.0;  // |W|^2 = 4
  CHECK(power_activation(W, 1.0).squaredNorm() == doctest::Approx(1.0).epsilon(1e-15));
  CMatrix V = CMatrix::Zero(2, 2);
  V(1, 0) = std::sqrt(0.5);
  CHECK(power_activation(V, 1.0) == V);
  CHECK(power_activation(CMatrix::Zero(3, 2), 1.0) == CMatrix::Zero(3, 2));

  std::mt19937_64 rng(11);
  for (int t = 0; t < 100; ++t) {
    const CMatrix R = random_cmatrix(8, 4, rng) * (0.1 + t * 0.1);
    CHECK(power_activation(R, 10.0).squaredNorm() <= 10.0 * (1.0 + 1e-12));
  }
}

TEST_CASE("tape power activation matches the plain route and reports raw power") {
  std::mt19937_64 rng(13);
  std::vector<CMatrix> Hs{random_cmatrix(3, 4, rng), random_cmatrix(3, 4, rng)};
  std::vector<CMatrix> Ws{random_cmatrix(4, 3, rng) * 3.0, random_cmatrix(4, 3, rng) * 0.1};
  const ChannelBatch batch = make_channel_batch(Hs);
  ad::Tensor re(ad::Shape{6, 4}), im(ad::Shape{6, 4});
  for (std::size_t s = 0; s < 2; ++s) {
    ad::Tensor r, i;
    beams_to_rows(Ws[s], r, i);
    std::copy(r.data().begin(), r.data().end(), re.data().begin() + static_cast<std::ptrdiff_t>(s * 12));
    std::copy(i.data().begin(), i.data().end(), im.data().begin() + static_cast<std::ptrdiff_t>(s * 12));
  }
  ad::Tape tape;
  ad::Var raw;
  const BeamVars out = power_activation(tape, batch, {tape.constant(re), tape.constant(im)}, 10.0, &raw);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(raw.value()[s] == doctest::Approx(Ws[s].squaredNorm()).epsilon(1e-13));
    const CMatrix got = beams_of_sample(batch, out.re.value(), out.im.value(), s);
    CHECK((got - power_activation(Ws[s], 10.0)).norm() < 1e-12);
  }
}

TEST_CASE("projection and utility are consistent") {
  // rate on projected W equals rate on W_raw * sqrt(P/|W_raw|^2)
  std::mt19937_64 rng(15);
  const CMatrix H = random_cmatrix(4, 8, rng);
  const CMatrix Wr = random_cmatrix(8, 4, rng) * 2.0;
  REQUIRE(Wr.squaredNorm() > 10.0);
  const CMatrix scaled = Wr * std::sqrt(10.0 / Wr.squaredNorm());
  const auto a = user_rates(H, power_activation(Wr, 10.0), 1.0);
  const auto b = user_rates(H, scaled, 1.0);
  for (std::size_t k = 0; k < 4; ++k) CHECK(a[k] == b[k]);
}

TEST_CASE("BeamMatrix feasibility flag") {
  CMatrix W = CMatrix::Zero(2, 1);
  W(0, 0) = 1.0;
  CHECK(BeamMatrix::from(W, 1.0, 1.0).feasible);
  CHECK_FALSE(BeamMatrix::from(W * 1.001, 1.002001, 1.0).feasible);
}

TEST_CASE("losses: values") {
  ad::Tape tape;
  auto s = [&](double v) { return tape.constant(ad::Tensor::scalar(v)); };
  CHECK(loss_unsupervised(s(6.0)).value().item() == -6.0);
  CHECK(loss_supervised(s(3.0), s(3.0)).value().item() == 0.0);
  CHECK(loss_supervised(s(2.0), s(3.0)).value().item() == 1.0);
  CHECK(loss_penalty(s(2.0), s(5.0), 10.0, 10.0).value().item() == -2.0);
  CHECK(loss_penalty(s(2.0), s(11.0), 10.0, 10.0).value().item() == doctest::Approx(-2.0 + 10.0));
  CHECK(loss_lagrangian(s(2.0), s(13.0), 10.0, 0.0).value().item() == -2.0);
  CHECK(loss_lagrangian(s(2.0), s(13.0), 10.0, 0.5).value().item() == doctest::Approx(-2.0 + 1.5));
}

TEST_CASE("losses: gradients") {
  {
    ad::Tape tape;
    ad::Var u = tape.variable(ad::Tensor::scalar(2.0));
    tape.backward(loss_supervised(u, tape.constant(ad::Tensor::scalar(3.0))));
    CHECK(tape.grad(u).item() == doctest::Approx(-2.0));
  }
  {
    ad::Tape tape;
    ad::Var u = tape.variable(ad::Tensor::scalar(2.0));
    ad::Var p = tape.variable(ad::Tensor::scalar(11.0));
    tape.backward(loss_penalty(u, p, 10.0, 10.0));
    CHECK(tape.grad(p).item() == doctest::Approx(20.0));
    CHECK(tape.grad(u).item() == doctest::Approx(-1.0));
  }
  {
    ad::Tape tape;
    ad::Var p = tape.variable(ad::Tensor::scalar(9.0));
    ad::Var u = tape.variable(ad::Tensor::scalar(2.0));
    tape.backward(loss_penalty(u, p, 10.0, 10.0));
    CHECK(tape.grad(p).item() == 0.0);
  }
  {
    ad::Tape tape;
    ad::Var p = tape.variable(ad::Tensor::scalar(9.0));
    ad::Var u = tape.variable(ad::Tensor::scalar(2.0));
    tape.backward(loss_lagrangian(u, p, 10.0, 0.25));
    CHECK(tape.grad(p).item() == doctest::Approx(0.25));
  }
}

TEST_CASE("dual update") {
  CHECK(dual_update(0.5, -1.0, 1.0) == 0.0);
  CHECK(dual_update(0.5, 2.0, 0.1) == doctest::Approx(0.7));
  CHECK(dual_update(0.0, 0.0, 0.1) == 0.0);
}

TEST_CASE("utility gradients through the tape match finite differences") {
  std::mt19937_64 rng(21);
  for (UtilityKind kind : {UtilityKind::srm, UtilityKind::eem, UtilityKind::mmr}) {
    for (int t = 0; t < 5; ++t) {
      std::vector<CMatrix> Hs{random_cmatrix(3, 4, rng), random_cmatrix(2, 4, rng)};
      const ChannelBatch batch = make_channel_batch(Hs);
      const UtilitySpec spec{kind, 1.0, 10.0, 1.0};
      std::normal_distribution<double> g(0.0, 1.0);
      ad::Tensor re(ad::Shape{5, 4}), im(ad::Shape{5, 4});
      for (double& x : re.data()) x = g(rng);
      for (double& x : im.data()) x = g(rng);
      const std::vector<ad::Tensor> point{re, im};
      auto f = [&](ad::Tape& tape, std::span<const ad::Var> v) {
        BeamVars b = power_activation(tape, batch, {v[0], v[1]}, spec.power_budget);
        return ad::sum(loss_unsupervised(sample_utility(tape, batch, b, spec)));
      };
      CHECK(ad::grad_check(f, point) < 1e-5);
    }
  }
}
