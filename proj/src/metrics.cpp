#include "wgnn/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace wgnn {

using nlohmann::json;

std::optional<double> optimality(std::span<const EvalRecord> records) {
  double num = 0.0;
  double den = 0.0;
  std::size_t n = 0;
  for (const EvalRecord& r : records) {
    if (!r.feasible || !r.label_valid) continue;
    num += r.objective;
    den += r.label;
    ++n;
  }
  if (n == 0 || den == 0.0) return std::nullopt;
  return 100.0 * num / den;
}

double feasibility_rate(std::span<const double> powers, double power_budget, double tol) {
  if (powers.empty()) return 0.0;
  std::size_t ok = 0;
  for (double p : powers) ok += p <= power_budget * (1.0 + tol) ? 1 : 0;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(powers.size());
}

double feasibility_rate(std::span<const EvalRecord> records) {
  if (records.empty()) return 0.0;
  std::size_t ok = 0;
  for (const EvalRecord& r : records) ok += r.feasible ? 1 : 0;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(records.size());
}

std::optional<double> stability(std::span<const EvalRecord> records, double n) {
  if (!(n > 0.0 && n < 100.0)) throw std::invalid_argument("stability: n must lie in (0, 100)");
  std::size_t total = 0;
  std::size_t within = 0;
  for (const EvalRecord& r : records) {
    if (!r.feasible || !r.label_valid) continue;
    ++total;
    within += r.objective >= (1.0 - n / 100.0) * r.label ? 1 : 0;
  }
  if (total == 0) return std::nullopt;
  return 100.0 * static_cast<double>(within) / static_cast<double>(total);
}

TimingStats inference_time(const std::function<void(const ChannelSample&)>& fn,
                           std::span<const ChannelSample> samples, int repetitions) {
  if (repetitions < 1) throw std::invalid_argument("inference_time: repetitions must be >= 1");
  TimingStats st;
  st.repetitions = repetitions;
  st.samples = samples.size();
  if (samples.empty()) return st;
  for (const ChannelSample& s : samples) fn(s);  // warm-up
  std::vector<double> ms;
  ms.reserve(samples.size() * static_cast<std::size_t>(repetitions));
  for (int r = 0; r < repetitions; ++r) {
    for (const ChannelSample& s : samples) {
      const auto t0 = std::chrono::steady_clock::now();
      fn(s);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
  }
  double sum = 0.0;
  for (double x : ms) sum += x;
  st.mean_ms = sum / static_cast<double>(ms.size());
  std::sort(ms.begin(), ms.end());
  const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(ms.size()))) - 1;
  st.p95_ms = ms[std::min(idx, ms.size() - 1)];
  return st;
}

TrainingEfficiency training_efficiency(std::span<const double> validation_utility, std::size_t samples_used) {
  TrainingEfficiency te;
  te.samples_used = samples_used;
  if (validation_utility.empty()) return te;
  const double best = *std::max_element(validation_utility.begin(), validation_utility.end());
  const double threshold = best - 0.01 * std::abs(best);
  for (std::size_t e = 0; e < validation_utility.size(); ++e) {
    if (validation_utility[e] >= threshold) {
      te.epochs_to_converge = static_cast<int>(e) + 1;
      break;
    }
  }
  return te;
}

std::vector<BeamMatrix> predict(const ModelConfig& config, const ParamSet& params,
                                std::span<const ChannelSample> samples, double power_budget,
                                std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("predict: batch_size must be >= 1");
  std::vector<BeamMatrix> out;
  out.reserve(samples.size());
  for (std::size_t lo = 0; lo < samples.size(); lo += batch_size) {
    const auto chunk = samples.subspan(lo, std::min(batch_size, samples.size() - lo));
    ad::Tape tape;
    ParamVars vars = bind_params(tape, params, false);
    const ModelBatch batch = make_model_batch(config, chunk);
    const ForwardOutput fo = forward(config, vars, batch, power_budget);
    for (std::size_t s = 0; s < chunk.size(); ++s) {
      out.push_back(BeamMatrix::from(beams_of_sample(batch.channels, fo.beams.re.value(), fo.beams.im.value(), s),
                                     fo.raw_power.value()[s], power_budget, kFeasibilityTol));
    }
  }
  return out;
}

BeamMatrix predict_one(const ModelConfig& config, const ParamSet& params, const ChannelSample& sample,
                       double power_budget) {
  if (config.is_mlp()) return mlp_baseline_forward(params, config, sample, power_budget);
  return model_forward(config, params, build_graph(sample, config.representation, config.edge_features),
                       power_budget);
}

void check_compatible(const ModelConfig& config, const FeatureDims& dims, int k_users, int n_antennas) {
  if (config.is_mlp() && (k_users != dims.k_users || n_antennas != dims.n_antennas)) {
    throw std::invalid_argument("mlp checkpoint was trained for K=" + std::to_string(dims.k_users) +
                                ", N=" + std::to_string(dims.n_antennas) + " but the dataset has K=" +
                                std::to_string(k_users) + ", N=" + std::to_string(n_antennas));
  }
  if (!config.is_mlp() && config.representation == GraphKind::link_graph && n_antennas != dims.n_antennas) {
    throw std::invalid_argument("link_graph checkpoint expects N=" + std::to_string(dims.n_antennas) +
                                " antennas (node feature width) but the dataset has N=" +
                                std::to_string(n_antennas));
  }
}

std::vector<EvalRecord> evaluate_records(const ModelConfig& config, const ParamSet& params,
                                         std::span<const ChannelSample> samples, const LabelSet& labels,
                                         const UtilitySpec& spec) {
  std::unordered_map<std::int64_t, const Label*> by_id;
  for (const Label& l : labels.labels) by_id[l.sample_id] = &l;
  const std::vector<BeamMatrix> beams = predict(config, params, samples, spec.power_budget);
  std::vector<EvalRecord> recs;
  recs.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = by_id.find(samples[i].sample_id);
    if (it == by_id.end()) {
      throw std::invalid_argument("no label for sample " + std::to_string(samples[i].sample_id));
    }
    EvalRecord r;
    r.sample_id = samples[i].sample_id;
    r.objective = utility_value(spec, samples[i].H, beams[i].W);
    r.power = beams[i].power();
    r.feasible = r.power <= spec.power_budget * (1.0 + kFeasibilityTol) && std::isfinite(r.objective);
    r.label = it->second->objective;
    r.label_valid = it->second->valid;
    recs.push_back(r);
  }
  return recs;
}

std::vector<ScalabilityRow> scalability_eval(const ModelConfig& config, const FeatureDims& dims,
                                             const ParamSet& params, std::span<const ScaleSetting> settings,
                                             const UtilitySpec& spec) {
  std::vector<ScalabilityRow> rows;
  for (const ScaleSetting& s : settings) {
    if (!s.dataset || !s.labels) throw std::invalid_argument("scalability_eval: setting without data");
    ScalabilityRow row;
    row.setting = s.descriptor;
    row.k_users = s.dataset->header.k_users;
    row.n_antennas = s.dataset->header.n_antennas;
    row.power_budget = s.dataset->header.power_budget;
    try {
      check_compatible(config, dims, row.k_users, row.n_antennas);
    } catch (const std::invalid_argument& e) {
      row.applicable = false;
      row.note = std::string("N/A: ") + e.what();
      rows.push_back(std::move(row));
      continue;
    }
    UtilitySpec local = spec;
    local.power_budget = s.dataset->header.power_budget;
    local.sigma2 = s.dataset->header.sigma2;
    const auto recs = evaluate_records(config, params, s.dataset->samples, *s.labels, local);
    row.optimality = optimality(recs);
    row.feasibility_rate = feasibility_rate(recs);
    rows.push_back(std::move(row));
  }
  return rows;
}

void fill_outcome_metrics(MetricsReport& report, std::span<const EvalRecord> records, double stability_n) {
  report.samples = records.size();
  report.feasible_samples = 0;
  report.invalid_labels = 0;
  for (const EvalRecord& r : records) {
    report.feasible_samples += r.feasible ? 1 : 0;
    report.invalid_labels += r.label_valid ? 0 : 1;
  }
  report.optimality = optimality(records);
  report.feasibility_rate = feasibility_rate(records);
  report.stability_n = stability_n;
  report.stability = stability(records, stability_n);
  report.stability_curve.clear();
  for (double n : kStabilityCurve) report.stability_curve[n] = stability(records, n);
  report.stability_curve[stability_n] = report.stability;
}

MetricsReport evaluate(const ModelConfig& config, const ParamSet& params, std::span<const ChannelSample> samples,
                       const LabelSet& labels, const UtilitySpec& spec, const EvalOptions& opts) {
  MetricsReport rep;
  const auto recs = evaluate_records(config, params, samples, labels, spec);
  fill_outcome_metrics(rep, recs, opts.stability_n);
  if (opts.timing_samples > 0 && !samples.empty()) {
    const auto subset = samples.first(std::min(opts.timing_samples, samples.size()));
    const TimingStats t = inference_time(
        [&](const ChannelSample& s) { (void)predict_one(config, params, s, spec.power_budget); }, subset,
        opts.timing_repetitions);
    rep.inference_ms = t.mean_ms;
    rep.inference_p95_ms = t.p95_ms;
  }
  rep.metadata["utility"] = to_string(spec.kind);
  rep.metadata["constraint_mode"] = to_string(config.constraint_mode);
  rep.metadata["timing_threads"] = 1;
  return rep;
}

// ---- serialization ---------------------------------------------------------------

namespace {

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <class T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

std::string curve_key(double n) {
  std::ostringstream os;
  os << n;
  return os.str();
}

}  // namespace

json to_json(const MetricsReport& r) {
  json scal = json::array();
  for (const ScalabilityRow& row : r.scalability) {
    scal.push_back({{"setting", row.setting},
                    {"k_users", row.k_users},
                    {"n_antennas", row.n_antennas},
                    {"power_budget", row.power_budget},
                    {"applicable", row.applicable},
                    {"optimality", opt(row.optimality)},
                    {"feasibility_rate", opt(row.feasibility_rate)},
                    {"note", row.note}});
  }
  json curve = json::object();
  for (const auto& [n, v] : r.stability_curve) curve[curve_key(n)] = opt(v);
  return json{{"optimality", opt(r.optimality)},
              {"feasibility_rate", r.samples == 0 ? json(nullptr) : json(r.feasibility_rate)},
              {"inference_ms", opt(r.inference_ms)},
              {"inference_p95_ms", opt(r.inference_p95_ms)},
              {"scalability", scal},
              {"training_samples", opt(r.training_samples)},
              {"epochs_to_converge", opt(r.epochs_to_converge)},
              {"stability_n", r.stability_n},
              {"stability", opt(r.stability)},
              {"stability_curve", curve},
              {"samples", r.samples},
              {"feasible_samples", r.feasible_samples},
              {"invalid_labels", r.invalid_labels},
              {"metadata", r.metadata}};
}

MetricsReport report_from_json(const json& j) {
  MetricsReport r;
  try {
    r.optimality = get_opt<double>(j, "optimality");
    r.feasibility_rate = get_opt<double>(j, "feasibility_rate").value_or(0.0);
    r.inference_ms = get_opt<double>(j, "inference_ms");
    r.inference_p95_ms = get_opt<double>(j, "inference_p95_ms");
    for (const json& row : j.at("scalability")) {
      ScalabilityRow s;
      s.setting = row.at("setting").get<std::string>();
      s.k_users = row.at("k_users").get<int>();
      s.n_antennas = row.at("n_antennas").get<int>();
      s.power_budget = row.at("power_budget").get<double>();
      s.applicable = row.at("applicable").get<bool>();
      s.optimality = get_opt<double>(row, "optimality");
      s.feasibility_rate = get_opt<double>(row, "feasibility_rate");
      s.note = row.value("note", "");
      r.scalability.push_back(std::move(s));
    }
    r.training_samples = get_opt<std::size_t>(j, "training_samples");
    r.epochs_to_converge = get_opt<int>(j, "epochs_to_converge");
    r.stability_n = j.at("stability_n").get<double>();
    r.stability = get_opt<double>(j, "stability");
    for (const auto& [k, v] : j.at("stability_curve").items()) {
      r.stability_curve[std::stod(k)] = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
    r.samples = j.at("samples").get<std::size_t>();
    r.feasible_samples = j.at("feasible_samples").get<std::size_t>();
    r.invalid_labels = j.at("invalid_labels").get<std::size_t>();
    r.metadata = j.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

std::vector<RadarAxis> radar_axes(const MetricsReport& r) {
  auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };
  std::vector<RadarAxis> axes;
  axes.push_back({"optimality", r.optimality, r.optimality ? std::optional(clamp01(*r.optimality / 100.0)) : std::nullopt,
                  "value/100 clipped to [0,1]"});
  if (r.samples == 0) {
    axes.push_back({"feasibility", std::nullopt, std::nullopt, "value/100"});
  } else {
    axes.push_back({"feasibility", r.feasibility_rate, clamp01(r.feasibility_rate / 100.0), "value/100"});
  }
  constexpr double kRefMs = 1.0;
  axes.push_back({"inference_efficiency", r.inference_ms,
                  r.inference_ms ? std::optional(kRefMs / (kRefMs + *r.inference_ms)) : std::nullopt,
                  "1/(1+ms/1.0)"});
  std::optional<double> scal;
  {
    double sum = 0.0;
    int n = 0;
    for (const ScalabilityRow& row : r.scalability) {
      if (row.applicable && row.optimality) {
        sum += *row.optimality;
        ++n;
      }
    }
    if (n > 0) scal = sum / n;
  }
  axes.push_back({"scalability", scal, scal ? std::optional(clamp01(*scal / 100.0)) : std::nullopt,
                  "mean optimality over applicable settings /100"});
  constexpr double kRefEpochs = 50.0;
  std::optional<double> epochs;
  if (r.epochs_to_converge) epochs = *r.epochs_to_converge;
  axes.push_back({"training_efficiency", epochs,
                  epochs ? std::optional(kRefEpochs / (kRefEpochs + *epochs)) : std::nullopt,
                  "1/(1+epochs/50)"});
  axes.push_back({"stability", r.stability, r.stability ? std::optional(clamp01(*r.stability / 100.0)) : std::nullopt,
                  "value/100 at n=" + curve_key(r.stability_n)});
  return axes;
}

void emit_report(const MetricsReport& report, const std::filesystem::path& path, ReportFormat format) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("emit_report: cannot open " + path.string());
  if (format == ReportFormat::json) {
    os << to_json(report).dump(2) << '\n';
  } else {
    auto cell = [](const std::optional<double>& v) {
      if (!v) return std::string("null");
      std::ostringstream s;
      s << std::setprecision(17) << *v;
      return s.str();
    };
    os << "axis,value,normalized,normalization\n";
    for (const RadarAxis& a : radar_axes(report)) {
      os << a.axis << ',' << cell(a.value) << ',' << cell(a.normalized) << ",\"" << a.normalization << "\"\n";
    }
  }
  if (!os) throw std::runtime_error("emit_report: write failed for " + path.string());
}

MetricsReport read_report(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_report: cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return report_from_json(j);
}

}  // namespace wgnn
