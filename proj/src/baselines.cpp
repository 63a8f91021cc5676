#include "wgnn/baselines.hpp"

#include "wgnn/autodiff.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

namespace wgnn {

using nlohmann::json;

namespace {

void check_budget(double power_budget) {
  if (!(power_budget > 0.0)) throw std::invalid_argument("power budget must be > 0");
}

CMatrix scale_to_power(const CMatrix& W, double power_budget) {
  const double p = W.squaredNorm();
  if (!(p > 0.0)) throw std::invalid_argument("cannot scale an all-zero beam matrix");
  return W * std::sqrt(power_budget / p);
}

// Solves M X = B for Hermitian positive definite M through its real embedding
// [[Re M, -Im M], [Im M, Re M]]. Returns false when the factorization fails.
bool hermitian_solve(const CMatrix& M, const CMatrix& B, CMatrix& X) {
  const Eigen::Index n = M.rows();
  Eigen::MatrixXd R(2 * n, 2 * n);
  R.topLeftCorner(n, n) = M.real();
  R.topRightCorner(n, n) = -M.imag();
  R.bottomLeftCorner(n, n) = M.imag();
  R.bottomRightCorner(n, n) = M.real();
  Eigen::MatrixXd rhs(2 * n, B.cols());
  rhs.topRows(n) = B.real();
  rhs.bottomRows(n) = B.imag();
  Eigen::LLT<Eigen::MatrixXd> llt(R);
  if (llt.info() != Eigen::Success) return false;
  const Eigen::MatrixXd sol = llt.solve(rhs);
  if (!sol.allFinite()) return false;
  X.resize(n, B.cols());
  X.real() = sol.topRows(n);
  X.imag() = sol.bottomRows(n);
  return true;
}

}  // namespace

CMatrix mrt(const CMatrix& H, double power_budget) {
  check_budget(power_budget);
  if (H.size() == 0 || H.squaredNorm() == 0.0) throw std::invalid_argument("mrt: channel is all zero");
  return scale_to_power(H.adjoint(), power_budget);
}

CMatrix zero_forcing(const CMatrix& H, double power_budget) {
  check_budget(power_budget);
  if (H.rows() > H.cols()) {
    throw std::invalid_argument("zero_forcing: K=" + std::to_string(H.rows()) + " exceeds N=" +
                                std::to_string(H.cols()));
  }
  Eigen::FullPivLU<CMatrix> lu(H);
  lu.setThreshold(1e-10);
  if (lu.rank() < H.rows()) throw std::invalid_argument("zero_forcing: channel is rank-deficient");
  const CMatrix gram = H * H.adjoint();
  return scale_to_power(H.adjoint() * gram.inverse(), power_budget);
}

CMatrix wmmse_filter(const CMatrix& H, const Eigen::VectorXcd& u, const Eigen::VectorXd& v, double mu) {
  const Eigen::Index K = H.rows();
  const Eigen::Index N = H.cols();
  // a_k = conj(h_k) as a column, so a_k^H w = h_k w
  const CMatrix A = H.adjoint();
  CMatrix M = CMatrix::Identity(N, N) * mu;
  for (Eigen::Index j = 0; j < K; ++j) M.noalias() += (v(j) * std::norm(u(j))) * A.col(j) * A.col(j).adjoint();
  CMatrix rhs(N, K);
  for (Eigen::Index k = 0; k < K; ++k) rhs.col(k) = (v(k) * u(k)) * A.col(k);
  CMatrix W;
  if (!hermitian_solve(M, rhs, W)) {
    W = CMatrix::Constant(N, K, std::numeric_limits<double>::infinity());
  }
  return W;
}

namespace {

double power_of(const CMatrix& W) {
  const double p = W.squaredNorm();
  return std::isfinite(p) ? p : std::numeric_limits<double>::infinity();
}

CMatrix wmmse_beam_update(const CMatrix& H, const Eigen::VectorXcd& u, const Eigen::VectorXd& v,
                          double power_budget) {
  CMatrix W = wmmse_filter(H, u, v, 0.0);
  if (power_of(W) <= power_budget) return W;
  double hi = 1.0;
  while (power_of(wmmse_filter(H, u, v, hi)) > power_budget) hi *= 2.0;
  double lo = 0.0;
  for (int i = 0; i < 64; ++i) {
    const double mid = 0.5 * (lo + hi);
    (power_of(wmmse_filter(H, u, v, mid)) > power_budget ? lo : hi) = mid;
  }
  return wmmse_filter(H, u, v, hi);
}

}  // namespace

SolverResult wmmse_srm(const CMatrix& H, double power_budget, double sigma2, const WmmseOptions& opts) {
  check_budget(power_budget);
  if (!(sigma2 > 0.0)) throw std::invalid_argument("wmmse: sigma2 must be > 0");
  if (opts.max_iter < 1) throw std::invalid_argument("wmmse: max_iter must be >= 1");
  const Eigen::Index K = H.rows();

  SolverResult res;
  res.W = mrt(H, power_budget);
  res.objective = sum_rate(user_rates(H, res.W, sigma2));
  res.trace.push_back(res.objective);

  CMatrix W = res.W;
  Eigen::VectorXcd u(K);
  Eigen::VectorXd v(K);
  for (int it = 1; it <= opts.max_iter; ++it) {
    const CMatrix G = H * W;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double total = sigma2 + G.row(k).squaredNorm();
      u(k) = G(k, k) / total;
      // 1 - conj(u_k) g_kk = 1 - |g_kk|^2 / total, the MMSE of user k
      const double mse = 1.0 - std::norm(G(k, k)) / total;
      v(k) = 1.0 / std::max(mse, std::numeric_limits<double>::min());
    }
    W = wmmse_beam_update(H, u, v, power_budget);
    const double obj = sum_rate(user_rates(H, W, sigma2));
    res.trace.push_back(obj);
    res.iterations = it;
    const double gain = obj - res.objective;
    if (obj > res.objective) {
      res.objective = obj;
      res.W = W;
    }
    if (std::abs(gain) < opts.tol) {
      res.converged = true;
      break;
    }
  }
  return res;
}

SolverResult pga_oracle(const CMatrix& H, const UtilitySpec& spec, const PgaOptions& opts) {
  spec.validate();
  if (opts.restarts < 1) throw std::invalid_argument("pga: restarts must be >= 1");
  if (opts.steps < 0) throw std::invalid_argument("pga: steps must be >= 0");
  if (!(opts.lr > 0.0)) throw std::invalid_argument("pga: lr must be > 0");
  const double P = spec.power_budget;
  const auto K = static_cast<std::size_t>(H.rows());
  const auto N = static_cast<std::size_t>(H.cols());
  const ChannelBatch batch = make_channel_batch(std::span<const CMatrix>(&H, 1));

  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> fraction(0.1, 1.0);

  auto project = [P](ad::Tensor& re, ad::Tensor& im) {
    double p = 0.0;
    for (double x : re.data()) p += x * x;
    for (double x : im.data()) p += x * x;
    if (p <= P) return;
    const double s = std::sqrt(P / p);
    for (double& x : re.data()) x *= s;
    for (double& x : im.data()) x *= s;
  };

  SolverResult best;
  best.objective = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    ad::Tensor re(ad::Shape{K, N});
    ad::Tensor im(ad::Shape{K, N});
    // Restart 0 starts from the MRT direction, the rest from random points.
    // Every start has strictly positive power.
    CMatrix W0 = CMatrix::Zero(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(K));
    if (r == 0 && H.squaredNorm() > 0.0) {
      W0 = H.adjoint();
    } else {
      for (Eigen::Index i = 0; i < W0.size(); ++i) W0(i) = {normal(rng), normal(rng)};
    }
    beams_to_rows(scale_to_power(W0, P * (r == 0 ? 1.0 : fraction(rng))), re, im);

    SolverResult run;
    run.objective = -std::numeric_limits<double>::infinity();
    double prev = run.objective;
    for (int step = 0; step <= opts.steps; ++step) {
      ad::Tape tape;
      BeamVars beams{tape.variable(re), tape.variable(im)};
      ad::Var u = sample_utility(tape, batch, beams, spec);
      const double value = u.value()[0];
      run.trace.push_back(value);
      if (value > run.objective) {
        run.objective = value;
        run.W = beams_of_sample(batch, re, im, 0);
      }
      run.iterations = step;
      if (step > 0 && std::abs(value - prev) < 1e-10 * std::max(1.0, std::abs(value))) {
        run.converged = true;
        break;
      }
      prev = value;
      if (step == opts.steps) break;
      tape.backward(ad::sum(u));
      const ad::Tensor& gr = tape.grad(beams.re);
      const ad::Tensor& gi = tape.grad(beams.im);
      for (std::size_t i = 0; i < re.size(); ++i) {
        re[i] += opts.lr * gr[i];
        im[i] += opts.lr * gi[i];
      }
      project(re, im);
    }
    if (run.objective > best.objective) best = std::move(run);
  }
  return best;
}

SolverKind parse_solver(std::string_view name) {
  if (name == "wmmse") return SolverKind::wmmse;
  if (name == "pga") return SolverKind::pga;
  if (name == "mrt") return SolverKind::mrt;
  if (name == "zf") return SolverKind::zf;
  throw std::invalid_argument("unknown solver '" + std::string(name) + "' (expected wmmse|pga|mrt|zf)");
}

std::string_view to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::wmmse: return "wmmse";
    case SolverKind::pga: return "pga";
    case SolverKind::mrt: return "mrt";
    case SolverKind::zf: return "zf";
  }
  return "?";
}

std::size_t LabelSet::invalid_count() const {
  std::size_t n = 0;
  for (const Label& l : labels) n += l.valid ? 0 : 1;
  return n;
}

LabelSet label_dataset(const Dataset& dataset, const UtilitySpec& spec, SolverKind solver,
                       const WmmseOptions& wmmse, const PgaOptions& pga) {
  spec.validate();
  if (solver == SolverKind::wmmse && spec.kind != UtilityKind::srm) {
    throw std::invalid_argument("label: wmmse only solves srm; use pga for " + std::string(to_string(spec.kind)));
  }
  LabelSet out;
  out.spec = spec;
  out.solver = solver;
  out.wmmse = wmmse;
  out.pga = pga;
  out.manifest = dataset.header.manifest;
  out.labels.reserve(dataset.samples.size());
  for (const ChannelSample& s : dataset.samples) {
    Label l;
    l.sample_id = s.sample_id;
    l.solver = std::string(to_string(solver));
    try {
      CMatrix W;
      switch (solver) {
        case SolverKind::wmmse:
          W = wmmse_srm(s.H, spec.power_budget, spec.sigma2, wmmse).W;
          break;
        case SolverKind::pga: {
          PgaOptions o = pga;
          o.seed = pga.seed ^ static_cast<std::uint64_t>(s.sample_id);
          W = pga_oracle(s.H, spec, o).W;
          break;
        }
        case SolverKind::mrt: W = mrt(s.H, spec.power_budget); break;
        case SolverKind::zf: W = zero_forcing(s.H, spec.power_budget); break;
      }
      l.objective = utility_value(spec, s.H, W);
      l.valid = std::isfinite(l.objective) && W.squaredNorm() <= spec.power_budget * (1.0 + 1e-9);
    } catch (const std::exception&) {
      l.objective = 0.0;
      l.valid = false;
    }
    if (!l.valid) l.objective = 0.0;
    out.labels.push_back(std::move(l));
  }
  return out;
}

void write_labels(const std::filesystem::path& path, const LabelSet& set) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_labels: cannot open " + path.string());
  json header{{"format", "wgnn-labels/1"},
              {"utility", to_string(set.spec.kind)},
              {"sigma2", set.spec.sigma2},
              {"power_budget", set.spec.power_budget},
              {"circuit_power", set.spec.circuit_power},
              {"solver", to_string(set.solver)},
              {"wmmse", {{"max_iter", set.wmmse.max_iter}, {"tol", set.wmmse.tol}}},
              {"pga", {{"restarts", set.pga.restarts}, {"steps", set.pga.steps}, {"lr", set.pga.lr},
                       {"seed", set.pga.seed}}},
              {"count", set.labels.size()},
              {"manifest", set.manifest}};
  os << header.dump() << '\n';
  for (const Label& l : set.labels) {
    os << json{{"sample_id", l.sample_id}, {"objective", l.objective}, {"solver", l.solver}, {"valid", l.valid}}.dump()
       << '\n';
  }
  if (!os) throw std::runtime_error("write_labels: write failed for " + path.string());
}

LabelSet read_labels(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_labels: cannot open " + path.string());
  LabelSet set;
  std::string line;
  std::size_t lineno = 0;
  std::size_t expected = 0;
  auto where = [&] { return path.string() + ":" + std::to_string(lineno); };
  try {
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j = json::parse(line);
      if (lineno == 1) {
        if (j.value("format", "") != "wgnn-labels/1") throw FormatError(where() + ": not a label file");
        set.spec.kind = parse_utility(j.at("utility").get<std::string>());
        set.spec.sigma2 = j.at("sigma2").get<double>();
        set.spec.power_budget = j.at("power_budget").get<double>();
        set.spec.circuit_power = j.at("circuit_power").get<double>();
        set.solver = parse_solver(j.at("solver").get<std::string>());
        set.wmmse.max_iter = j.at("wmmse").at("max_iter").get<int>();
        set.wmmse.tol = j.at("wmmse").at("tol").get<double>();
        set.pga.restarts = j.at("pga").at("restarts").get<int>();
        set.pga.steps = j.at("pga").at("steps").get<int>();
        set.pga.lr = j.at("pga").at("lr").get<double>();
        set.pga.seed = j.at("pga").at("seed").get<std::uint64_t>();
        expected = j.at("count").get<std::size_t>();
        set.manifest = j.value("manifest", "");
        continue;
      }
      Label l;
      l.sample_id = j.at("sample_id").get<std::int64_t>();
      l.objective = j.at("objective").get<double>();
      l.solver = j.at("solver").get<std::string>();
      l.valid = j.at("valid").get<bool>();
      set.labels.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw FormatError(where() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw FormatError(where() + ": " + e.what());
  }
  if (lineno == 0) throw FormatError(path.string() + ": empty label file");
  if (set.labels.size() != expected) {
    throw FormatError(path.string() + ": header announces " + std::to_string(expected) + " labels, found " +
                      std::to_string(set.labels.size()));
  }
  return set;
}

}  // namespace wgnn
