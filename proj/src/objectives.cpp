#include "wgnn/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace wgnn {

UtilityKind parse_utility(std::string_view name) {
  if (name == "srm") return UtilityKind::srm;
  if (name == "eem") return UtilityKind::eem;
  if (name == "mmr") return UtilityKind::mmr;
  throw std::invalid_argument("unknown utility '" + std::string(name) + "' (expected srm|eem|mmr)");
}

std::string_view to_string(UtilityKind kind) {
  switch (kind) {
    case UtilityKind::srm: return "srm";
    case UtilityKind::eem: return "eem";
    case UtilityKind::mmr: return "mmr";
  }
  return "?";
}

void UtilitySpec::validate() const {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("utility: sigma2 must be > 0");
  if (!(power_budget > 0.0)) throw std::invalid_argument("utility: power budget must be > 0");
  if (!(circuit_power > 0.0)) throw std::invalid_argument("utility: circuit power must be > 0");
}

BeamMatrix BeamMatrix::from(CMatrix W, double raw_power, double power_budget, double tol) {
  BeamMatrix b;
  b.W = std::move(W);
  b.raw_power = raw_power;
  b.feasible = b.W.squaredNorm() <= power_budget * (1.0 + tol);
  return b;
}

// ---- plain evaluation -------------------------------------------------------

std::vector<double> user_rates(const CMatrix& H, const CMatrix& W, double sigma2) {
  if (H.cols() != W.rows() || H.rows() != W.cols()) {
    throw std::invalid_argument("user_rates: H is " + std::to_string(H.rows()) + "x" +
                                std::to_string(H.cols()) + " but W is " + std::to_string(W.rows()) +
                                "x" + std::to_string(W.cols()));
  }
  const CMatrix G = H * W;
  std::vector<double> rates(static_cast<std::size_t>(H.rows()));
  for (Eigen::Index k = 0; k < G.rows(); ++k) {
    double interference = 0.0;
    for (Eigen::Index j = 0; j < G.cols(); ++j) {
      if (j != k) interference += std::norm(G(k, j));
    }
    rates[static_cast<std::size_t>(k)] = std::log2(1.0 + std::norm(G(k, k)) / (interference + sigma2));
  }
  return rates;
}

double sum_rate(std::span<const double> rates) {
  return std::accumulate(rates.begin(), rates.end(), 0.0);
}

double min_rate(std::span<const double> rates) {
  if (rates.empty()) throw std::invalid_argument("min_rate: no rates");
  return *std::min_element(rates.begin(), rates.end());
}

double energy_efficiency(std::span<const double> rates, const CMatrix& W, double circuit_power) {
  return sum_rate(rates) / (W.squaredNorm() + circuit_power);
}

double utility_value(const UtilitySpec& spec, const CMatrix& H, const CMatrix& W) {
  const std::vector<double> r = user_rates(H, W, spec.sigma2);
  switch (spec.kind) {
    case UtilityKind::srm: return sum_rate(r);
    case UtilityKind::eem: return energy_efficiency(r, W, spec.circuit_power);
    case UtilityKind::mmr: return min_rate(r);
  }
  return 0.0;
}

CMatrix power_activation(const CMatrix& W_raw, double power_budget) {
  if (!(power_budget > 0.0)) throw std::invalid_argument("power_activation: P must be > 0");
  const double p = W_raw.squaredNorm();
  if (p <= power_budget) return W_raw;
  return W_raw * std::sqrt(power_budget / p);
}

double dual_update(double lambda, double violation, double eta_dual) {
  if (lambda < 0.0) throw std::invalid_argument("dual_update: lambda must be >= 0");
  if (!(eta_dual > 0.0)) throw std::invalid_argument("dual_update: eta_dual must be > 0");
  return std::max(0.0, lambda + eta_dual * violation);
}

// ---- tape evaluation ----------------------------------------------------------

ChannelBatch make_channel_batch(std::span<const CMatrix> channels) {
  if (channels.empty()) throw std::invalid_argument("make_channel_batch: no samples");
  ChannelBatch b;
  b.num_samples = channels.size();
  b.n_antennas = static_cast<int>(channels[0].cols());
  const auto N = static_cast<std::size_t>(b.n_antennas);
  std::vector<double> re;
  std::vector<double> im;
  std::size_t base = 0;
  for (std::size_t s = 0; s < channels.size(); ++s) {
    const CMatrix& H = channels[s];
    if (static_cast<std::size_t>(H.cols()) != N) {
      throw std::invalid_argument("make_channel_batch: sample " + std::to_string(s) +
                                  " has a different antenna count");
    }
    const auto K = static_cast<std::size_t>(H.rows());
    b.users_per_sample.push_back(static_cast<int>(K));
    for (std::size_t k = 0; k < K; ++k) {
      b.sample_of_user.push_back(s);
      for (std::size_t n = 0; n < N; ++n) {
        re.push_back(H(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)).real());
        im.push_back(H(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(n)).imag());
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t j = 0; j < K; ++j) {
        const std::size_t p = b.pair_rx.size();
        b.pair_rx.push_back(base + k);
        b.pair_tx.push_back(base + j);
        if (j == k) {
          b.self_pairs.push_back(p);
        } else {
          b.cross_pairs.push_back(p);
          b.cross_rx.push_back(base + k);
        }
      }
    }
    base += K;
  }
  b.num_users = base;
  b.h_re = ad::Tensor(ad::Shape{base, N}, std::move(re));
  b.h_im = ad::Tensor(ad::Shape{base, N}, std::move(im));
  return b;
}

ChannelBatch make_channel_batch(std::span<const ChannelSample> samples) {
  std::vector<CMatrix> hs;
  hs.reserve(samples.size());
  for (const ChannelSample& s : samples) hs.push_back(s.H);
  return make_channel_batch(std::span<const CMatrix>(hs));
}

namespace {

void check_beams(const ChannelBatch& batch, const BeamVars& beams) {
  const ad::Shape want{batch.num_users, static_cast<std::size_t>(batch.n_antennas)};
  if (beams.re.shape() != want || beams.im.shape() != want) {
    throw ad::ShapeError("beams: expected " + ad::shape_str(want) + ", got " +
                         ad::shape_str(beams.re.shape()) + " / " + ad::shape_str(beams.im.shape()));
  }
}

}  // namespace

ad::Var user_rates(ad::Tape& tape, const ChannelBatch& batch, const BeamVars& beams, double sigma2) {
  check_beams(batch, beams);
  ad::Var hr = tape.constant(batch.h_re);
  ad::Var hi = tape.constant(batch.h_im);
  ad::Var hk_r = ad::gather_rows(hr, batch.pair_rx);
  ad::Var hk_i = ad::gather_rows(hi, batch.pair_rx);
  ad::Var wj_r = ad::gather_rows(beams.re, batch.pair_tx);
  ad::Var wj_i = ad::gather_rows(beams.im, batch.pair_tx);
  // g = h . w in paired-real form
  ad::Var g_re = ad::sum_cols(ad::sub(ad::mul(hk_r, wj_r), ad::mul(hk_i, wj_i)));
  ad::Var g_im = ad::sum_cols(ad::add(ad::mul(hk_r, wj_i), ad::mul(hk_i, wj_r)));
  ad::Var gain = ad::add(ad::square(g_re), ad::square(g_im));

  ad::Var signal = ad::gather_rows(gain, batch.self_pairs);
  ad::Var interference = batch.cross_pairs.empty()
                             ? ad::scale(signal, 0.0)
                             : ad::segment_reduce(ad::gather_rows(gain, batch.cross_pairs),
                                                  batch.cross_rx, batch.num_users, ad::SegmentMode::sum);
  ad::Var noise_floor = ad::add_scalar(interference, sigma2);
  // log2(1 + s/d) = (ln(d + s) - ln d) / ln 2
  return ad::scale(ad::sub(ad::log(ad::add(noise_floor, signal)), ad::log(noise_floor)),
                   1.0 / std::numbers::ln2);
}

ad::Var sample_power(ad::Tape&, const ChannelBatch& batch, const BeamVars& beams) {
  check_beams(batch, beams);
  ad::Var per_user = ad::add(ad::sum_cols(ad::square(beams.re)), ad::sum_cols(ad::square(beams.im)));
  return ad::segment_reduce(per_user, batch.sample_of_user, batch.num_samples, ad::SegmentMode::sum);
}

ad::Var sample_utility(ad::Tape& tape, const ChannelBatch& batch, const BeamVars& beams,
                       const UtilitySpec& spec) {
  ad::Var rates = user_rates(tape, batch, beams, spec.sigma2);
  switch (spec.kind) {
    case UtilityKind::srm:
      return ad::segment_reduce(rates, batch.sample_of_user, batch.num_samples, ad::SegmentMode::sum);
    case UtilityKind::eem: {
      ad::Var sr = ad::segment_reduce(rates, batch.sample_of_user, batch.num_samples, ad::SegmentMode::sum);
      return energy_efficiency(sr, sample_power(tape, batch, beams), spec.circuit_power);
    }
    case UtilityKind::mmr:
      return ad::neg(ad::segment_reduce(ad::neg(rates), batch.sample_of_user, batch.num_samples,
                                        ad::SegmentMode::max));
  }
  throw std::invalid_argument("sample_utility: unknown utility");
}

BeamVars power_activation(ad::Tape& tape, const ChannelBatch& batch, const BeamVars& raw,
                          double power_budget, ad::Var* raw_power) {
  if (!(power_budget > 0.0)) throw std::invalid_argument("power_activation: P must be > 0");
  ad::Var power = sample_power(tape, batch, raw);
  if (raw_power) *raw_power = power;
  const ad::Shape shape = power.shape();
  // factor = sqrt(P / max(power, P)); equals 1 inside the ball
  ad::Var clamped = ad::maximum(power, tape.constant(ad::Tensor(shape, power_budget)));
  ad::Var factor = ad::div(tape.constant(ad::Tensor(shape, std::sqrt(power_budget))), ad::sqrt(clamped));
  ad::Var per_user = ad::gather_rows(factor, batch.sample_of_user);
  return BeamVars{ad::mul_rows(raw.re, per_user), ad::mul_rows(raw.im, per_user)};
}

ad::Var sum_rate(ad::Var rates) { return ad::sum(rates); }

ad::Var min_rate(ad::Var rates) { return ad::min(rates); }

ad::Var energy_efficiency(ad::Var sum_rate, ad::Var power, double circuit_power) {
  return ad::div(sum_rate, ad::add_scalar(power, circuit_power));
}

ad::Var loss_unsupervised(ad::Var utility) { return ad::neg(utility); }

ad::Var loss_supervised(ad::Var utility, ad::Var label) {
  return ad::square(ad::sub(utility, label));
}

ad::Var loss_penalty(ad::Var utility, ad::Var power, double power_budget, double rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("loss_penalty: rho must be > 0");
  ad::Var violation = ad::relu(ad::add_scalar(power, -power_budget));
  return ad::add(ad::neg(utility), ad::scale(ad::square(violation), rho));
}

ad::Var loss_lagrangian(ad::Var utility, ad::Var power, double power_budget, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("loss_lagrangian: lambda must be >= 0");
  return ad::add(ad::neg(utility), ad::scale(ad::add_scalar(power, -power_budget), lambda));
}

CMatrix beams_of_sample(const ChannelBatch& batch, const ad::Tensor& re, const ad::Tensor& im,
                        std::size_t sample) {
  const auto N = static_cast<std::size_t>(batch.n_antennas);
  std::size_t first = 0;
  for (std::size_t s = 0; s < sample; ++s) first += static_cast<std::size_t>(batch.users_per_sample[s]);
  const auto K = static_cast<std::size_t>(batch.users_per_sample[sample]);
  CMatrix W(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t n = 0; n < N; ++n) {
      W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)) = {re.at(first + k, n), im.at(first + k, n)};
    }
  }
  return W;
}

void beams_to_rows(const CMatrix& W, ad::Tensor& re, ad::Tensor& im) {
  const auto N = static_cast<std::size_t>(W.rows());
  const auto K = static_cast<std::size_t>(W.cols());
  re = ad::Tensor(ad::Shape{K, N});
  im = ad::Tensor(ad::Shape{K, N});
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t n = 0; n < N; ++n) {
      const auto w = W(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
      re.at(k, n) = w.real();
      im.at(k, n) = w.imag();
    }
  }
}

}  // namespace wgnn
