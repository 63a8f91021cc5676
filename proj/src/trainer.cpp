#include "wgnn/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

namespace wgnn {

using nlohmann::json;

Learning parse_learning(std::string_view s) {
  if (s == "sup" || s == "supervised") return Learning::supervised;
  if (s == "unsup" || s == "unsupervised") return Learning::unsupervised;
  throw std::invalid_argument("unknown learning mode '" + std::string(s) + "' (expected sup|unsup)");
}

std::string_view to_string(Learning l) { return l == Learning::supervised ? "sup" : "unsup"; }

void TrainConfig::validate() const {
  utility.validate();
  if (!(lr > 0.0)) throw std::invalid_argument("train config: lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("train config: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("train config: adam eps must be > 0");
  if (!(rho0 > 0.0) || !(rho_factor >= 1.0) || rho_every < 1 || !(rho_cap >= rho0)) {
    throw std::invalid_argument("train config: invalid rho schedule");
  }
  if (!(eta_dual > 0.0)) throw std::invalid_argument("train config: eta_dual must be > 0");
  if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("train config: validation_fraction must lie in [0, 1)");
  }
}

double TrainConfig::rho_at(int epoch) const {
  const int doublings = std::max(0, epoch - 1) / rho_every;
  return std::min(rho_cap, rho0 * std::pow(rho_factor, doublings));
}

json to_json(const TrainConfig& c) {
  return json{{"utility", to_string(c.utility.kind)},
              {"sigma2", c.utility.sigma2},
              {"power_budget", c.utility.power_budget},
              {"circuit_power", c.utility.circuit_power},
              {"learning", to_string(c.learning)},
              {"batch_size", c.batch_size},
              {"epochs", c.epochs},
              {"lr", c.lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"rho0", c.rho0},
              {"rho_factor", c.rho_factor},
              {"rho_every", c.rho_every},
              {"rho_cap", c.rho_cap},
              {"eta_dual", c.eta_dual},
              {"seed", c.seed},
              {"patience", c.patience},
              {"validation_fraction", c.validation_fraction}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (j.contains("utility")) c.utility.kind = parse_utility(j["utility"].get<std::string>());
  if (j.contains("sigma2")) c.utility.sigma2 = j["sigma2"].get<double>();
  if (j.contains("power_budget")) c.utility.power_budget = j["power_budget"].get<double>();
  if (j.contains("circuit_power")) c.utility.circuit_power = j["circuit_power"].get<double>();
  if (j.contains("learning")) c.learning = parse_learning(j["learning"].get<std::string>());
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("lr")) c.lr = j["lr"].get<double>();
  if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
  if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
  if (j.contains("adam_eps")) c.adam_eps = j["adam_eps"].get<double>();
  if (j.contains("rho0")) c.rho0 = j["rho0"].get<double>();
  if (j.contains("rho_factor")) c.rho_factor = j["rho_factor"].get<double>();
  if (j.contains("rho_every")) c.rho_every = j["rho_every"].get<int>();
  if (j.contains("rho_cap")) c.rho_cap = j["rho_cap"].get<double>();
  if (j.contains("eta_dual")) c.eta_dual = j["eta_dual"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("patience")) c.patience = j["patience"].get<int>();
  if (j.contains("validation_fraction")) c.validation_fraction = j["validation_fraction"].get<double>();
  c.validate();
  return c;
}

// ---- log -----------------------------------------------------------------------

std::vector<double> TrainLog::validation_utility() const {
  std::vector<double> v;
  v.reserve(epochs.size());
  for (const EpochRecord& e : epochs) v.push_back(e.val_utility);
  return v;
}

bool TrainLog::same_trajectory(const TrainLog& o) const {
  if (epochs.size() != o.epochs.size() || best_epoch != o.best_epoch || stopped_early != o.stopped_early ||
      train_samples != o.train_samples || validation_samples != o.validation_samples) {
    return false;
  }
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const EpochRecord& a = epochs[i];
    const EpochRecord& b = o.epochs[i];
    if (a.epoch != b.epoch || a.train_loss != b.train_loss || a.val_utility != b.val_utility ||
        a.val_score != b.val_score || a.val_feasibility != b.val_feasibility || a.lambda != b.lambda ||
        a.rho != b.rho) {
      return false;
    }
  }
  return true;
}

namespace {

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

void write_train_log(const std::filesystem::path& path, const TrainLog& log, const json& header) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_train_log: cannot open " + path.string());
  json h = header;
  h["format"] = "wgnn-trainlog/1";
  h["best_epoch"] = log.best_epoch;
  h["stopped_early"] = log.stopped_early;
  h["train_samples"] = log.train_samples;
  h["validation_samples"] = log.validation_samples;
  os << h.dump() << '\n';
  for (const EpochRecord& e : log.epochs) {
    os << json{{"epoch", e.epoch},
               {"train_loss", e.train_loss},
               {"val_utility", e.val_utility},
               {"val_score", e.val_score},
               {"val_feasibility", e.val_feasibility},
               {"lambda", opt(e.lambda)},
               {"rho", opt(e.rho)},
               {"wall_ms", e.wall_ms}}
              .dump()
       << '\n';
  }
  if (!os) throw std::runtime_error("write_train_log: write failed for " + path.string());
}

TrainLog read_train_log(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_train_log: cannot open " + path.string());
  TrainLog log;
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (lineno == 1) {
        if (j.value("format", "") != "wgnn-trainlog/1") throw FormatError(path.string() + ":1: not a train log");
        log.best_epoch = j.at("best_epoch").get<int>();
        log.stopped_early = j.at("stopped_early").get<bool>();
        log.train_samples = j.at("train_samples").get<std::size_t>();
        log.validation_samples = j.at("validation_samples").get<std::size_t>();
        continue;
      }
      EpochRecord e;
      e.epoch = j.at("epoch").get<int>();
      e.train_loss = j.at("train_loss").get<double>();
      e.val_utility = j.at("val_utility").get<double>();
      e.val_score = j.at("val_score").get<double>();
      e.val_feasibility = j.at("val_feasibility").get<double>();
      e.lambda = get_opt(j, "lambda");
      e.rho = get_opt(j, "rho");
      e.wall_ms = j.at("wall_ms").get<double>();
      log.epochs.push_back(e);
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
  }
  if (lineno == 0) throw FormatError(path.string() + ": empty train log");
  return log;
}

// ---- adam ----------------------------------------------------------------------

void adam_step(ParamSet& params, const std::map<std::string, ad::Tensor>& grads, AdamState& st,
               const AdamHyper& h) {
  ++st.step;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(st.step));
  for (const auto& [name, g] : grads) {
    if (name == kLambdaName) continue;
    auto it = params.tensors.find(name);
    if (it == params.tensors.end()) throw std::invalid_argument("adam_step: unknown parameter '" + name + "'");
    ad::Tensor& p = it->second;
    if (g.shape() != p.shape()) {
      throw ad::ShapeError("adam_step: gradient of '" + name + "' is " + ad::shape_str(g.shape()) +
                           " but parameter is " + ad::shape_str(p.shape()));
    }
    auto [mi, m_new] = st.m.try_emplace(name, p.shape(), 0.0);
    auto [vi, v_new] = st.v.try_emplace(name, p.shape(), 0.0);
    ad::Tensor& m = mi->second;
    ad::Tensor& v = vi->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      p[i] -= h.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + h.eps);
    }
  }
}

// ---- training --------------------------------------------------------------------

namespace {

struct Validation {
  double utility = 0.0;
  double score = 0.0;
  double feasibility = 0.0;
};

Validation validate_model(const ModelConfig& model, const ParamSet& params, std::span<const ChannelSample> val,
                          const UtilitySpec& spec) {
  const std::vector<BeamMatrix> out = predict(model, params, val, spec.power_budget);
  Validation v;
  std::size_t feasible = 0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const bool ok = out[i].power() <= spec.power_budget * (1.0 + kFeasibilityTol);
    feasible += ok ? 1 : 0;
    v.utility += utility_value(spec, val[i].H, power_activation(out[i].W, spec.power_budget));
    if (ok) v.score += utility_value(spec, val[i].H, out[i].W);
  }
  const auto n = static_cast<double>(val.size());
  v.utility /= n;
  v.score /= n;
  v.feasibility = 100.0 * static_cast<double>(feasible) / n;
  return v;
}

}  // namespace

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, std::span<const ChannelSample> samples,
                  const LabelSet* labels) {
  model.validate();
  cfg.validate();
  if (samples.empty()) throw std::invalid_argument("train: no training samples");
  if (cfg.learning == Learning::supervised && !labels) {
    throw std::invalid_argument("train: supervised learning requires labels");
  }
  const int K = static_cast<int>(samples[0].H.rows());
  const int N = static_cast<int>(samples[0].H.cols());
  if (model.is_mlp()) {
    for (const ChannelSample& s : samples) {
      if (s.H.rows() != K || s.H.cols() != N) throw std::invalid_argument("train: mlp needs fixed (K, N)");
    }
  }

  std::unordered_map<std::int64_t, double> label_of;
  if (cfg.learning == Learning::supervised) {
    for (const Label& l : labels->labels) {
      if (l.valid) label_of[l.sample_id] = l.objective;
    }
  }

  // Held-out validation fold.
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(samples.size())));
  if (cfg.validation_fraction > 0.0) n_val = std::max<std::size_t>(n_val, 1);
  if (n_val >= samples.size()) n_val = 0;
  std::vector<ChannelSample> val;
  std::vector<ChannelSample> tr;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const ChannelSample& s = samples[order[i]];
    if (i < n_val) {
      val.push_back(s);
    } else if (cfg.learning == Learning::unsupervised || label_of.contains(s.sample_id)) {
      tr.push_back(s);
    }
  }
  if (tr.empty()) throw std::invalid_argument("train: no usable training samples (missing labels?)");
  if (val.empty()) val = tr;

  std::vector<RadioGraph> graphs;
  if (!model.is_mlp()) {
    graphs.reserve(tr.size());
    for (const ChannelSample& s : tr) graphs.push_back(build_graph(s, model.representation, model.edge_features));
  }

  TrainResult res;
  res.params = init_params(model, feature_dims(model, K, N), cfg.seed);
  res.log.train_samples = tr.size();
  res.log.validation_samples = val.size();
  const bool ldm = model.constraint_mode == ConstraintMode::ldm;
  const bool pm = model.constraint_mode == ConstraintMode::pm;
  const double P = cfg.utility.power_budget;

  AdamState adam;
  const AdamHyper hyper{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  TrainResult best = res;
  TrainResult last_good = res;
  double best_score = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<std::size_t> idx(tr.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto B = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(idx.begin(), idx.end(), rng);
    const double rho = cfg.rho_at(epoch);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;

    for (std::size_t lo = 0; lo < idx.size(); lo += B) {
      const std::size_t hi = std::min(idx.size(), lo + B);
      std::vector<ChannelSample> bs;
      std::vector<RadioGraph> bg;
      for (std::size_t i = lo; i < hi; ++i) {
        bs.push_back(tr[idx[i]]);
        if (!graphs.empty()) bg.push_back(graphs[idx[i]]);
      }
      ModelBatch batch{std::nullopt, make_channel_batch(bs)};
      if (!bg.empty()) batch.graphs = make_batch(bg);

      ad::Tape tape;
      ParamVars vars = bind_params(tape, res.params, true);
      const ForwardOutput fo = forward(model, vars, batch, P);
      ad::Var util = sample_utility(tape, batch.channels, fo.beams, cfg.utility);
      ad::Var per_sample;
      if (cfg.learning == Learning::supervised) {
        ad::Tensor target(ad::Shape{bs.size()});
        for (std::size_t i = 0; i < bs.size(); ++i) target[i] = label_of.at(bs[i].sample_id);
        per_sample = loss_supervised(util, tape.constant(std::move(target)));
      } else {
        per_sample = loss_unsupervised(util);
      }
      if (pm) {
        ad::Var excess = ad::relu(ad::add_scalar(fo.raw_power, -P));
        per_sample = ad::add(per_sample, ad::scale(ad::square(excess), rho));
      } else if (ldm) {
        per_sample = ad::add(per_sample, ad::scale(ad::add_scalar(fo.raw_power, -P), res.params.lambda()));
      }
      ad::Var loss = ad::mean(per_sample);
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        throw TrainingDiverged("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                   " (batch starting at " + std::to_string(lo) + "); keeping epoch " +
                                   std::to_string(res.log.epochs.size()) + " parameters",
                               last_good);
      }
      tape.backward(loss);
      std::map<std::string, ad::Tensor> grads;
      for (const auto& [name, v] : vars) {
        if (tape.requires_grad(v)) grads.emplace(name, tape.grad(v));
      }
      adam_step(res.params, grads, adam, hyper);
      if (ldm) {
        const ad::Tensor& p = fo.raw_power.value();
        double violation = 0.0;
        for (double x : p.data()) violation += x - P;
        violation /= static_cast<double>(p.size());
        res.params.set_lambda(dual_update(res.params.lambda(), violation, cfg.eta_dual));
      }
      loss_sum += lv * static_cast<double>(bs.size());
      loss_count += bs.size();
    }

    const Validation v = validate_model(model, res.params, val, cfg.utility);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(loss_count);
    rec.val_utility = v.utility;
    rec.val_score = v.score;
    rec.val_feasibility = v.feasibility;
    if (ldm) rec.lambda = res.params.lambda();
    if (pm) rec.rho = rho;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    res.log.epochs.push_back(rec);

    if (!std::isfinite(v.utility)) {
      throw TrainingDiverged("training diverged: non-finite validation utility at epoch " + std::to_string(epoch),
                             last_good);
    }
    last_good.params = res.params;
    last_good.log = res.log;
    if (v.utility > best_score) {
      best_score = v.utility;
      res.log.best_epoch = epoch;
      best.params = res.params;
      best.log = res.log;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      res.log.stopped_early = true;
      break;
    }
  }
  res.params = best.params;
  return res;
}

// ---- ablation ----------------------------------------------------------------------

std::vector<std::string> ablation_recipes() { return {"mp-vs-attention-vs-residual", "heads", "depth"}; }

std::vector<AblationVariant> ablation_recipe(std::string_view recipe, const ModelConfig& base) {
  std::vector<AblationVariant> out;
  auto with = [&](std::string name, Aggregation agg, int heads, bool residual, int depth) {
    ModelConfig c = base;
    c.baseline_model = BaselineModel::none;
    c.aggregation = agg;
    c.heads = heads;
    c.residual = residual;
    c.depth = depth;
    c.validate();
    out.push_back({std::move(name), c});
  };
  if (recipe == "mp-vs-attention-vs-residual") {
    with("gcn", Aggregation::mean, base.heads, false, base.depth);
    with("gat", Aggregation::attention, 4, false, base.depth);
    with("resgat", Aggregation::attention, 4, true, base.depth);
  } else if (recipe == "heads") {
    for (int h : {1, 2, 4, 8}) with("heads" + std::to_string(h), Aggregation::attention, h, false, base.depth);
  } else if (recipe == "depth") {
    for (bool residual : {false, true}) {
      for (int d = 1; d <= 6; ++d) {
        with(std::string(residual ? "res" : "plain") + "-depth" + std::to_string(d), base.aggregation, base.heads,
             residual, d);
      }
    }
  } else {
    throw std::invalid_argument("unknown ablation recipe '" + std::string(recipe) +
                                "' (expected mp-vs-attention-vs-residual|heads|depth)");
  }
  return out;
}

std::vector<AblationEntry> ablate(std::string_view recipe, const ModelConfig& base, const TrainConfig& cfg,
                                  std::span<const ChannelSample> train_samples,
                                  std::span<const ChannelSample> test_samples, const LabelSet& test_labels,
                                  const LabelSet* train_labels, const EvalOptions& eval, int jobs) {
  std::vector<AblationEntry> entries;
  for (AblationVariant& v : ablation_recipe(recipe, base)) entries.push_back(AblationEntry{std::move(v), {}, {}});

  // Training runs are independent; evaluation (and its timing) stays sequential.
  const std::size_t workers = static_cast<std::size_t>(std::max(1, jobs));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(entries.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        entries[i].result = train(entries[i].variant.config, cfg, train_samples, train_labels);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, entries.size()); ++w) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (AblationEntry& e : entries) {
    e.report = evaluate(e.variant.config, e.result.params, test_samples, test_labels, cfg.utility, eval);
    const TrainingEfficiency te = training_efficiency(e.result.log.validation_utility(), e.result.log.train_samples);
    e.report.training_samples = te.samples_used;
    e.report.epochs_to_converge = te.epochs_to_converge;
    e.report.metadata["model"] = e.variant.name;
    e.report.metadata["recipe"] = recipe;
    e.report.metadata["seed"] = cfg.seed;
  }
  return entries;
}

}  // namespace wgnn
