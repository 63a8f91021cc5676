#pragma once

// Classical beamforming solvers: MRT and zero-forcing heuristics, WMMSE for
// sum rate, and a projected-gradient oracle for any utility. They provide the
// labels that learned models are measured against.

#include "wgnn/channel.hpp"
#include "wgnn/objectives.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wgnn {

struct SolverResult {
  CMatrix W;  // N x K
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

// w_k = c conj(h_k) with one common c > 0 and ||W||_F^2 = P.
CMatrix mrt(const CMatrix& H, double power_budget);
// W = H^H (H H^H)^-1 rescaled to full power. Throws when K > N or H is rank-deficient.
CMatrix zero_forcing(const CMatrix& H, double power_budget);

struct WmmseOptions {
  int max_iter = 500;
  double tol = 1e-8;
};

SolverResult wmmse_srm(const CMatrix& H, double power_budget, double sigma2,
                       const WmmseOptions& opts = {});

// Transmit filter of the WMMSE update for a given regularizer mu; exposed for tests.
// Returns (sum_j v_j |u_j|^2 a_j a_j^H + mu I)^-1 applied to v_k u_k a_k for every k.
CMatrix wmmse_filter(const CMatrix& H, const Eigen::VectorXcd& u, const Eigen::VectorXd& v, double mu);

struct PgaOptions {
  int restarts = 8;
  int steps = 500;
  double lr = 0.05;
  std::uint64_t seed = 0;
};

SolverResult pga_oracle(const CMatrix& H, const UtilitySpec& spec, const PgaOptions& opts = {});

enum class SolverKind { wmmse, pga, mrt, zf };
SolverKind parse_solver(std::string_view name);
std::string_view to_string(SolverKind kind);

struct Label {
  std::int64_t sample_id = 0;
  double objective = 0.0;
  std::string solver;
  bool valid = true;
  friend bool operator==(const Label&, const Label&) = default;
};

struct LabelSet {
  UtilitySpec spec;
  SolverKind solver = SolverKind::wmmse;
  WmmseOptions wmmse;
  PgaOptions pga;
  std::string manifest;
  std::vector<Label> labels;

  std::size_t invalid_count() const;
};

// One label per sample. Per-sample solver failures are recorded as invalid
// labels rather than aborting the run.
LabelSet label_dataset(const Dataset& dataset, const UtilitySpec& spec, SolverKind solver,
                       const WmmseOptions& wmmse = {}, const PgaOptions& pga = {});

// JSON Lines: a header object, then {sample_id, objective, solver, valid} per line.
void write_labels(const std::filesystem::path& path, const LabelSet& labels);
LabelSet read_labels(const std::filesystem::path& path);

}  // namespace wgnn
