#pragma once

// System utilities (SRM, EEM, MMR) for MU-MISO downlink beamforming and the
// loss constructions built on them.
//
// Received gain of user k from beam j: g_kj = sum_n H[k,n] W[n,j]; the SINR
// is |g_kk|^2 / (sum_{j != k} |g_kj|^2 + sigma2) and rates are in bits/use.
//
// Two routes compute the same quantities: plain complex arithmetic on
// CMatrix (evaluation, baselines) and paired-real ops on the autodiff tape
// (training, projected-gradient oracle).

#include "wgnn/autodiff.hpp"
#include "wgnn/channel.hpp"

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace wgnn {

enum class UtilityKind { srm, eem, mmr };

UtilityKind parse_utility(std::string_view name);
std::string_view to_string(UtilityKind kind);

struct UtilitySpec {
  UtilityKind kind = UtilityKind::srm;
  double sigma2 = 1.0;
  double power_budget = 10.0;
  double circuit_power = 1.0;

  void validate() const;
};

inline constexpr double kBeamFeasibilityTol = 1e-9;

// N x K beamformer (column k serves user k).
struct BeamMatrix {
  CMatrix W;
  // Squared Frobenius norm before any projection.
  double raw_power = 0.0;
  bool feasible = true;

  double power() const { return W.squaredNorm(); }
  static BeamMatrix from(CMatrix W, double raw_power, double power_budget,
                         double tol = kBeamFeasibilityTol);
};

// ---- plain evaluation -------------------------------------------------------

std::vector<double> user_rates(const CMatrix& H, const CMatrix& W, double sigma2);
double sum_rate(std::span<const double> rates);
double min_rate(std::span<const double> rates);
double energy_efficiency(std::span<const double> rates, const CMatrix& W, double circuit_power);
double utility_value(const UtilitySpec& spec, const CMatrix& H, const CMatrix& W);

// Scales W onto the sum-power ball when it lies outside.
CMatrix power_activation(const CMatrix& W_raw, double power_budget);

double dual_update(double lambda, double violation, double eta_dual);

// ---- tape evaluation ----------------------------------------------------------

// Channels of a batch of samples with one row per user, in (sample, user) order.
struct ChannelBatch {
  std::size_t num_samples = 0;
  std::size_t num_users = 0;
  int n_antennas = 0;
  std::vector<int> users_per_sample;
  std::vector<std::size_t> sample_of_user;
  ad::Tensor h_re;  // [U x N]
  ad::Tensor h_im;  // [U x N]
  // Ordered (rx, tx) user pairs within each sample.
  std::vector<std::size_t> pair_rx;
  std::vector<std::size_t> pair_tx;
  std::vector<std::size_t> self_pairs;   // pair index of (k, k), in user order
  std::vector<std::size_t> cross_pairs;  // pair indices with rx != tx
  std::vector<std::size_t> cross_rx;
};

ChannelBatch make_channel_batch(std::span<const ChannelSample> samples);
ChannelBatch make_channel_batch(std::span<const CMatrix> channels);

// Per-user beams as paired real rows [U x N]; row u is w_u.
struct BeamVars {
  ad::Var re;
  ad::Var im;
};

// [U] rates
ad::Var user_rates(ad::Tape& tape, const ChannelBatch& batch, const BeamVars& beams, double sigma2);
// [B] squared Frobenius norm per sample
ad::Var sample_power(ad::Tape& tape, const ChannelBatch& batch, const BeamVars& beams);
// [B] per-sample utility
ad::Var sample_utility(ad::Tape& tape, const ChannelBatch& batch, const BeamVars& beams,
                       const UtilitySpec& spec);
// Scales each sample's beams onto the power ball; raw_power receives [B] powers.
BeamVars power_activation(ad::Tape& tape, const ChannelBatch& batch, const BeamVars& raw,
                          double power_budget, ad::Var* raw_power = nullptr);

ad::Var sum_rate(ad::Var rates);
ad::Var min_rate(ad::Var rates);
ad::Var energy_efficiency(ad::Var sum_rate, ad::Var power, double circuit_power);

// Losses act elementwise on [B] (or scalar) utilities and return the same shape.
ad::Var loss_unsupervised(ad::Var utility);
ad::Var loss_supervised(ad::Var utility, ad::Var label);
ad::Var loss_penalty(ad::Var utility, ad::Var power, double power_budget, double rho);
ad::Var loss_lagrangian(ad::Var utility, ad::Var power, double power_budget, double lambda);

// Conversions between BeamVars rows and N x K beam matrices.
CMatrix beams_of_sample(const ChannelBatch& batch, const ad::Tensor& re, const ad::Tensor& im,
                        std::size_t sample);
void beams_to_rows(const CMatrix& W, ad::Tensor& re, ad::Tensor& im);

}  // namespace wgnn
