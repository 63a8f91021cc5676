#include "wgnn/cli.hpp"

#include "wgnn/baselines.hpp"
#include "wgnn/channel.hpp"
#include "wgnn/manifest.hpp"
#include "wgnn/metrics.hpp"
#include "wgnn/model.hpp"
#include "wgnn/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace wgnn {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Usage or validation problem detected after parsing.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

std::string filename_of(const fs::path& p) { return p.filename().string(); }

fs::path with_suffix(const fs::path& p, const std::string& suffix) {
  fs::path q = p;
  q += suffix;
  return q;
}

fs::path csv_path_for(const fs::path& json_out) {
  fs::path p = json_out;
  return p.replace_extension(".csv");
}

json read_json_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw UsageError("cannot open " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

class ManifestScope {
 public:
  ManifestScope(std::string command, const std::vector<std::string>& argv) {
    m_.command = std::move(command);
    m_.argv = argv;
    m_.started_at = utc_timestamp();
  }
  RunManifest& get() { return m_; }
  // Writes the manifest next to `primary` and returns its file name.
  std::string finish(const fs::path& primary) {
    m_.finished_at = utc_timestamp();
    const fs::path p = manifest_path_for(primary);
    write_manifest(p, m_);
    return filename_of(p);
  }
  std::string name_for(const fs::path& primary) const { return filename_of(manifest_path_for(primary)); }

 private:
  RunManifest m_;
};

// ---- gen-data ---------------------------------------------------------------------

struct GenDataArgs {
  DatasetHeader header;
  std::string out;
};

int cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  a.header.validate();
  ManifestScope ms("gen-data", argv);
  Dataset d = generate_dataset(a.header);
  d.header.manifest = ms.name_for(a.out);
  write_dataset(a.out, d);
  RunManifest& m = ms.get();
  m.config = {{"k_users", a.header.k_users}, {"n_antennas", a.header.n_antennas}, {"count", a.header.count},
              {"power_budget", a.header.power_budget}, {"sigma2", a.header.sigma2}};
  m.seeds = {{"data", a.header.seed}};
  m.outputs = {{"dataset", a.out}};
  ms.finish(a.out);
  out << "wrote " << a.header.count << " samples (K=" << a.header.k_users << ", N=" << a.header.n_antennas
      << ") to " << a.out << '\n';
  return kExitOk;
}

// ---- label --------------------------------------------------------------------------

struct LabelArgs {
  std::string dataset;
  std::string utility;
  std::string solver = "auto";
  std::string out;
  double circuit_power = 1.0;
  WmmseOptions wmmse;
  PgaOptions pga;
};

int cmd_label(const LabelArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  UtilitySpec spec;
  spec.kind = parse_utility(a.utility);
  const SolverKind solver =
      a.solver == "auto" ? (spec.kind == UtilityKind::srm ? SolverKind::wmmse : SolverKind::pga) : parse_solver(a.solver);
  if (solver == SolverKind::wmmse && spec.kind != UtilityKind::srm) {
    throw UsageError("solver wmmse only handles srm; use --solver pga for " + a.utility);
  }
  const Dataset d = read_dataset(a.dataset);
  spec.sigma2 = d.header.sigma2;
  spec.power_budget = d.header.power_budget;
  spec.circuit_power = a.circuit_power;
  spec.validate();

  ManifestScope ms("label", argv);
  LabelSet labels = label_dataset(d, spec, solver, a.wmmse, a.pga);
  labels.manifest = ms.name_for(a.out);
  write_labels(a.out, labels);
  RunManifest& m = ms.get();
  m.config = {{"utility", a.utility}, {"solver", to_string(solver)}, {"circuit_power", a.circuit_power},
              {"wmmse", {{"max_iter", a.wmmse.max_iter}, {"tol", a.wmmse.tol}}},
              {"pga", {{"restarts", a.pga.restarts}, {"steps", a.pga.steps}, {"lr", a.pga.lr}}}};
  m.seeds = {{"pga", a.pga.seed}};
  m.inputs = {{"dataset", a.dataset}, {"dataset_manifest", d.header.manifest}};
  m.outputs = {{"labels", a.out}};
  ms.finish(a.out);

  double sum = 0.0;
  std::size_t n = 0;
  for (const Label& l : labels.labels) {
    if (l.valid) {
      sum += l.objective;
      ++n;
    }
  }
  out << "labelled " << labels.labels.size() << " samples with " << to_string(solver) << " ("
      << labels.invalid_count() << " invalid); mean " << a.utility << " = " << (n ? sum / static_cast<double>(n) : 0.0)
      << '\n';
  return kExitOk;
}

// ---- train --------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string model = "gcn";
  std::string utility = "srm";
  std::string constraint = "af";
  std::string learning = "unsup";
  std::string representation;
  std::string labels;
  std::string config;
  std::string log;
  std::string out;
  std::uint64_t seed = 0;
  int epochs = 0;
  int batch_size = 0;
  double lr = 0.0;
  int patience = 0;
  int hidden = 0;
  int depth = 0;
  int heads = 0;
  double eta_dual = 0.0;
  double circuit_power = 0.0;
};

struct Resolved {
  ModelConfig model;
  TrainConfig train;
};

// Defaults < --config file < explicit flags.
Resolved resolve_training(const TrainArgs& a, const CLI::App& sub) {
  Resolved r;
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  json file = json::object();
  if (!a.config.empty()) file = read_json_file(a.config);
  try {
    r.model = ModelConfig::preset(file.contains("model") && file["model"].contains("preset")
                                      ? file["model"]["preset"].get<std::string>()
                                      : a.model);
    if (given("--model")) r.model = ModelConfig::preset(a.model);
    if (file.contains("model")) {
      json mj = to_json(r.model);
      for (const auto& [k, v] : file["model"].items()) {
        if (k != "preset") mj[k] = v;
      }
      r.model = model_config_from_json(mj);
    }
    r.train = train_config_from_json(file.value("train", json::object()));
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad --config: ") + e.what());
  }
  if (given("--utility") || !file.contains("train") || !file["train"].contains("utility")) {
    r.train.utility.kind = parse_utility(a.utility);
  }
  if (given("--constraint")) r.model.constraint_mode = parse_constraint(a.constraint);
  if (given("--learning") || !file.contains("train") || !file["train"].contains("learning")) {
    r.train.learning = parse_learning(a.learning);
  }
  if (given("--representation")) r.model.representation = parse_graph_kind(a.representation);
  if (given("--seed")) r.train.seed = a.seed;
  if (given("--epochs")) r.train.epochs = a.epochs;
  if (given("--batch-size")) r.train.batch_size = a.batch_size;
  if (given("--lr")) r.train.lr = a.lr;
  if (given("--patience")) r.train.patience = a.patience;
  if (given("--hidden")) r.model.hidden_dim = a.hidden;
  if (given("--depth")) r.model.depth = a.depth;
  if (given("--heads")) r.model.heads = a.heads;
  if (given("--eta-dual")) r.train.eta_dual = a.eta_dual;
  if (given("--circuit-power")) r.train.utility.circuit_power = a.circuit_power;
  r.model.validate();
  return r;
}

const LabelSet* checked_labels(const std::string& path, const UtilitySpec& spec, LabelSet& storage) {
  if (path.empty()) return nullptr;
  storage = read_labels(path);
  if (storage.spec.kind != spec.kind) {
    throw UsageError("labels in " + path + " are for " + std::string(to_string(storage.spec.kind)) + ", not " +
                     std::string(to_string(spec.kind)));
  }
  return &storage;
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, const std::vector<std::string>& argv, std::ostream& out,
              std::ostream& err) {
  Resolved r = resolve_training(a, sub);
  if (r.train.learning == Learning::supervised && a.labels.empty()) {
    throw UsageError("--learning sup requires --labels");
  }
  const Dataset d = read_dataset(a.dataset);
  r.train.utility.sigma2 = d.header.sigma2;
  r.train.utility.power_budget = d.header.power_budget;
  r.train.validate();
  LabelSet label_storage;
  const LabelSet* labels = checked_labels(a.labels, r.train.utility, label_storage);

  ManifestScope ms("train", argv);
  const fs::path log_path = a.log.empty() ? with_suffix(a.out, ".trainlog.jsonl") : fs::path(a.log);
  RunManifest& m = ms.get();
  m.config = {{"model", to_json(r.model)}, {"train", to_json(r.train)}};
  m.seeds = {{"train", r.train.seed}};
  m.inputs = {{"dataset", a.dataset}, {"dataset_manifest", d.header.manifest}, {"labels", a.labels}};
  m.outputs = {{"checkpoint", a.out}, {"train_log", log_path.string()}};

  Checkpoint ck;
  ck.config = r.model;
  ck.dims = feature_dims(r.model, d.header.k_users, d.header.n_antennas);
  ck.metadata = {{"utility", to_string(r.train.utility.kind)},
                 {"circuit_power", r.train.utility.circuit_power},
                 {"power_budget", r.train.utility.power_budget},
                 {"sigma2", r.train.utility.sigma2},
                 {"seed", r.train.seed},
                 {"learning", to_string(r.train.learning)},
                 {"train", to_json(r.train)},
                 {"dataset", a.dataset},
                 {"manifest", ms.name_for(a.out)}};
  json log_header{{"manifest", ms.name_for(a.out)}, {"model", to_json(r.model)}, {"train", to_json(r.train)}};

  TrainResult res;
  int code = kExitOk;
  try {
    res = train(r.model, r.train, d.samples, labels);
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    res = e.last_good();
    ck.metadata["diverged"] = true;
    code = kExitRuntime;
  }
  ck.params = res.params;
  ck.metadata["epochs"] = res.log.epochs.size();
  ck.metadata["best_epoch"] = res.log.best_epoch;
  ck.metadata["train_samples"] = res.log.train_samples;
  write_checkpoint(a.out, ck);
  write_train_log(log_path, res.log, log_header);
  ms.finish(a.out);
  if (!res.log.epochs.empty()) {
    const EpochRecord& best = res.log.epochs[static_cast<std::size_t>(std::max(0, res.log.best_epoch - 1))];
    out << "trained " << a.model << " for " << res.log.epochs.size() << " epochs; best epoch " << res.log.best_epoch
        << ": validation " << to_string(r.train.utility.kind) << " = " << best.val_utility << ", feasibility "
        << best.val_feasibility << "%\n";
  }
  out << "checkpoint: " << a.out << "\ntrain log: " << log_path.string() << '\n';
  return code;
}

// ---- eval / scale-eval ---------------------------------------------------------------

UtilitySpec checkpoint_utility(const Checkpoint& ck, const Dataset& d) {
  UtilitySpec spec;
  spec.kind = parse_utility(ck.metadata.value("utility", "srm"));
  spec.circuit_power = ck.metadata.value("circuit_power", 1.0);
  spec.sigma2 = d.header.sigma2;
  spec.power_budget = d.header.power_budget;
  spec.validate();
  return spec;
}

void validate_against(const Checkpoint& ck, const Dataset& d) {
  try {
    check_compatible(ck.config, ck.dims, d.header.k_users, d.header.n_antennas);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

void write_reports(const MetricsReport& rep, const fs::path& json_out, const std::string& csv) {
  emit_report(rep, json_out, ReportFormat::json);
  emit_report(rep, csv.empty() ? csv_path_for(json_out) : fs::path(csv), ReportFormat::csv);
}

std::string fmt(const std::optional<double>& v) {
  if (!v) return "null";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << *v;
  return os.str();
}

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string labels;
  std::string train_log;
  std::string out;
  std::string csv;
  double stability_n = 10.0;
  int repetitions = 3;
  std::size_t timing_samples = 100;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  if (!(a.stability_n > 0.0 && a.stability_n < 100.0)) throw UsageError("--stability-n must lie in (0, 100)");
  const Checkpoint ck = read_checkpoint(a.checkpoint);
  const Dataset d = read_dataset(a.dataset);
  validate_against(ck, d);
  const UtilitySpec spec = checkpoint_utility(ck, d);
  LabelSet storage;
  const LabelSet* labels = checked_labels(a.labels, spec, storage);

  ManifestScope ms("eval", argv);
  EvalOptions opts;
  opts.stability_n = a.stability_n;
  opts.timing_repetitions = a.repetitions;
  opts.timing_samples = a.timing_samples;
  MetricsReport rep = evaluate(ck.config, ck.params, d.samples, *labels, spec, opts);

  fs::path log_path = a.train_log.empty() ? with_suffix(a.checkpoint, ".trainlog.jsonl") : fs::path(a.train_log);
  if (fs::exists(log_path)) {
    const TrainLog log = read_train_log(log_path);
    const TrainingEfficiency te = training_efficiency(log.validation_utility(), log.train_samples);
    rep.training_samples = te.samples_used;
    rep.epochs_to_converge = te.epochs_to_converge;
  } else if (!a.train_log.empty()) {
    throw UsageError("train log not found: " + a.train_log);
  }
  rep.metadata["model_id"] = a.checkpoint;
  rep.metadata["dataset_id"] = a.dataset;
  rep.metadata["dataset_seed"] = d.header.seed;
  rep.metadata["seed"] = ck.metadata.value("seed", std::uint64_t{0});
  rep.metadata["model"] = to_json(ck.config);
  rep.metadata["manifest"] = ms.name_for(a.out);
  write_reports(rep, a.out, a.csv);

  RunManifest& m = ms.get();
  m.config = {{"stability_n", a.stability_n}, {"repetitions", a.repetitions}, {"timing_samples", a.timing_samples}};
  m.seeds = {{"train", ck.metadata.value("seed", std::uint64_t{0})}, {"dataset", d.header.seed}};
  m.inputs = {{"checkpoint", a.checkpoint}, {"dataset", a.dataset}, {"labels", a.labels}};
  m.outputs = {{"report", a.out}, {"radar_csv", a.csv.empty() ? csv_path_for(a.out).string() : a.csv}};
  ms.finish(a.out);

  out << "optimality " << fmt(rep.optimality) << "%  feasibility " << fmt(rep.feasibility_rate) << "%  inference "
      << fmt(rep.inference_ms) << " ms  stability(n=" << a.stability_n << ") " << fmt(rep.stability) << "%\n";
  return kExitOk;
}

struct ScaleArgs {
  std::string checkpoint;
  std::vector<std::string> datasets;
  std::vector<std::string> labels;
  std::string out;
  std::string csv;
};

int cmd_scale_eval(const ScaleArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  if (a.datasets.size() != a.labels.size()) {
    throw UsageError("--datasets and --labels need the same number of files");
  }
  const Checkpoint ck = read_checkpoint(a.checkpoint);
  std::vector<Dataset> data;
  std::vector<LabelSet> labels;
  for (std::size_t i = 0; i < a.datasets.size(); ++i) {
    data.push_back(read_dataset(a.datasets[i]));
    labels.push_back(read_labels(a.labels[i]));
  }
  UtilitySpec spec = checkpoint_utility(ck, data.front());
  std::vector<ScaleSetting> settings;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (labels[i].spec.kind != spec.kind) throw UsageError("labels " + a.labels[i] + " are for another utility");
    std::ostringstream desc;
    desc << "K=" << data[i].header.k_users << ",N=" << data[i].header.n_antennas << ",P=" << data[i].header.power_budget;
    settings.push_back({desc.str(), &data[i], &labels[i]});
  }
  ManifestScope ms("scale-eval", argv);
  MetricsReport rep;
  rep.scalability = scalability_eval(ck.config, ck.dims, ck.params, settings, spec);
  rep.metadata = {{"model_id", a.checkpoint}, {"utility", to_string(spec.kind)},
                  {"constraint_mode", to_string(ck.config.constraint_mode)},
                  {"seed", ck.metadata.value("seed", std::uint64_t{0})}, {"manifest", ms.name_for(a.out)}};
  write_reports(rep, a.out, a.csv);
  RunManifest& m = ms.get();
  m.inputs = {{"checkpoint", a.checkpoint}, {"datasets", a.datasets}, {"labels", a.labels}};
  m.outputs = {{"report", a.out}};
  ms.finish(a.out);
  for (const ScalabilityRow& row : rep.scalability) {
    out << row.setting << ": ";
    if (row.applicable) {
      out << "optimality " << fmt(row.optimality) << "%, feasibility " << fmt(row.feasibility_rate) << "%\n";
    } else {
      out << row.note << '\n';
    }
  }
  return kExitOk;
}

// ---- ablate ---------------------------------------------------------------------------

struct AblateArgs {
  TrainArgs train;
  std::string recipe;
  std::string test_dataset;
  std::string test_labels;
  double test_fraction = 0.2;
  int jobs = 1;
};

int cmd_ablate(const AblateArgs& a, const CLI::App& sub, const std::vector<std::string>& argv, std::ostream& out) {
  const auto recipes = ablation_recipes();
  if (std::find(recipes.begin(), recipes.end(), a.recipe) == recipes.end()) {
    throw UsageError("unknown recipe '" + a.recipe + "' (expected mp-vs-attention-vs-residual|heads|depth)");
  }
  if (a.jobs < 1) throw UsageError("--jobs must be >= 1");
  Resolved r = resolve_training(a.train, sub);
  if (r.train.learning == Learning::supervised && a.train.labels.empty()) {
    throw UsageError("--learning sup requires --labels");
  }
  const Dataset d = read_dataset(a.train.dataset);
  r.train.utility.sigma2 = d.header.sigma2;
  r.train.utility.power_budget = d.header.power_budget;
  r.train.validate();

  std::vector<ChannelSample> train_samples;
  std::vector<ChannelSample> test_samples;
  LabelSet test_labels;
  if (!a.test_dataset.empty()) {
    train_samples = d.samples;
    test_samples = read_dataset(a.test_dataset).samples;
    if (a.test_labels.empty()) throw UsageError("--test-dataset requires --test-labels");
    test_labels = read_labels(a.test_labels);
  } else {
    SplitResult s = split(d, 1.0 - a.test_fraction, r.train.seed);
    train_samples = std::move(s.train.samples);
    test_samples = std::move(s.test.samples);
    Dataset test_set{d.header, test_samples};
    test_set.header.count = static_cast<int>(test_samples.size());
    test_labels = label_dataset(test_set, r.train.utility,
                                r.train.utility.kind == UtilityKind::srm ? SolverKind::wmmse : SolverKind::pga);
  }
  LabelSet train_storage;
  const LabelSet* train_labels = checked_labels(a.train.labels, r.train.utility, train_storage);

  const fs::path dir = a.train.out;
  fs::create_directories(dir);
  ManifestScope ms("ablate", argv);
  const std::vector<AblationEntry> entries =
      ablate(a.recipe, r.model, r.train, train_samples, test_samples, test_labels, train_labels, {}, a.jobs);

  const fs::path summary_path = dir / "ablation.json";
  json summary{{"recipe", a.recipe}, {"manifest", ms.name_for(summary_path)}, {"variants", json::array()}};
  for (const AblationEntry& e : entries) {
    Checkpoint ck{e.variant.config, feature_dims(e.variant.config, d.header.k_users, d.header.n_antennas),
                  e.result.params,
                  {{"utility", to_string(r.train.utility.kind)},
                   {"circuit_power", r.train.utility.circuit_power},
                   {"seed", r.train.seed},
                   {"recipe", a.recipe},
                   {"manifest", ms.name_for(summary_path)}}};
    const fs::path ckpt = dir / (e.variant.name + ".ckpt.json");
    write_checkpoint(ckpt, ck);
    MetricsReport rep = e.report;
    rep.metadata["manifest"] = ms.name_for(summary_path);
    write_reports(rep, dir / (e.variant.name + ".report.json"), "");
    summary["variants"].push_back({{"name", e.variant.name}, {"config", to_json(e.variant.config)},
                                   {"checkpoint", ckpt.string()}, {"report", to_json(rep)}});
    out << std::left << std::setw(14) << e.variant.name << " optimality " << fmt(rep.optimality)
        << "%  feasibility " << fmt(rep.feasibility_rate) << "%  inference " << fmt(rep.inference_ms) << " ms\n";
  }
  {
    std::ofstream os(summary_path);
    if (!os) throw std::runtime_error("cannot write " + summary_path.string());
    os << summary.dump(2) << '\n';
  }
  RunManifest& m = ms.get();
  m.config = {{"recipe", a.recipe}, {"model", to_json(r.model)}, {"train", to_json(r.train)},
              {"test_fraction", a.test_fraction}, {"jobs", a.jobs}};
  m.seeds = {{"train", r.train.seed}, {"dataset", d.header.seed}};
  m.inputs = {{"dataset", a.train.dataset}, {"test_dataset", a.test_dataset}, {"test_labels", a.test_labels}};
  m.outputs = {{"summary", summary_path.string()}, {"directory", dir.string()}};
  ms.finish(summary_path);
  return kExitOk;
}

void add_training_flags(CLI::App* sub, TrainArgs& t) {
  sub->add_option("--model", t.model, "gcn | gat | resgat | mlp")->check(CLI::IsMember({"gcn", "gat", "resgat", "mlp"}));
  sub->add_option("--utility", t.utility, "srm | eem | mmr");
  sub->add_option("--constraint", t.constraint, "af | pm | ldm");
  sub->add_option("--learning", t.learning, "sup | unsup");
  sub->add_option("--representation", t.representation, "link_graph | bipartite");
  sub->add_option("--labels", t.labels, "label file (required for --learning sup)");
  sub->add_option("--config", t.config, "JSON file {model: {...}, train: {...}}; flags override it");
  sub->add_option("--seed", t.seed);
  sub->add_option("--epochs", t.epochs);
  sub->add_option("--batch-size", t.batch_size);
  sub->add_option("--lr", t.lr);
  sub->add_option("--patience", t.patience);
  sub->add_option("--hidden", t.hidden);
  sub->add_option("--depth", t.depth);
  sub->add_option("--heads", t.heads);
  sub->add_option("--eta-dual", t.eta_dual);
  sub->add_option("--circuit-power", t.circuit_power);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GNN beamforming for MU-MISO downlink: data, labels, training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "generate Rayleigh-fading channel samples");
  gen->add_option("--k", gd.header.k_users, "users")->capture_default_str();
  gen->add_option("--n", gd.header.n_antennas, "BS antennas")->capture_default_str();
  gen->add_option("--count", gd.header.count, "samples")->default_val(2500);
  gen->add_option("--p", gd.header.power_budget, "sum-power budget")->capture_default_str();
  gen->add_option("--sigma2", gd.header.sigma2, "noise power")->capture_default_str();
  gen->add_option("--seed", gd.header.seed)->capture_default_str();
  gen->add_option("--out", gd.out, "output dataset (JSON Lines)")->required();

  LabelArgs la;
  auto* lab = app.add_subcommand("label", "solve every sample with a classical solver");
  lab->add_option("--dataset", la.dataset)->required();
  lab->add_option("--utility", la.utility, "srm | eem | mmr")->required();
  lab->add_option("--solver", la.solver, "auto | wmmse | pga | mrt | zf")->capture_default_str();
  lab->add_option("--out", la.out)->required();
  lab->add_option("--circuit-power", la.circuit_power)->capture_default_str();
  lab->add_option("--max-iter", la.wmmse.max_iter)->capture_default_str();
  lab->add_option("--tol", la.wmmse.tol)->capture_default_str();
  lab->add_option("--restarts", la.pga.restarts)->capture_default_str();
  lab->add_option("--steps", la.pga.steps)->capture_default_str();
  lab->add_option("--pga-lr", la.pga.lr)->capture_default_str();
  lab->add_option("--seed", la.pga.seed)->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  tr->add_option("--dataset", ta.dataset)->required();
  tr->add_option("--out", ta.out, "checkpoint path")->required();
  tr->add_option("--log", ta.log, "train log path (default <out>.trainlog.jsonl)");
  add_training_flags(tr, ta);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "six-metric report of a checkpoint on a labelled test set");
  ev->add_option("--checkpoint", ea.checkpoint)->required();
  ev->add_option("--dataset", ea.dataset)->required();
  ev->add_option("--labels", ea.labels)->required();
  ev->add_option("--stability-n", ea.stability_n)->capture_default_str();
  ev->add_option("--train-log", ea.train_log, "default <checkpoint>.trainlog.jsonl when present");
  ev->add_option("--out", ea.out, "report JSON")->required();
  ev->add_option("--csv", ea.csv, "radar CSV (default: report path with .csv)");
  ev->add_option("--repetitions", ea.repetitions)->capture_default_str();
  ev->add_option("--timing-samples", ea.timing_samples)->capture_default_str();

  ScaleArgs sa;
  auto* se = app.add_subcommand("scale-eval", "evaluate a checkpoint across test sets of other sizes");
  se->add_option("--checkpoint", sa.checkpoint)->required();
  se->add_option("--datasets", sa.datasets)->required();
  se->add_option("--labels", sa.labels)->required();
  se->add_option("--out", sa.out)->required();
  se->add_option("--csv", sa.csv);

  AblateArgs aa;
  auto* ab = app.add_subcommand("ablate", "train and compare a family of variants");
  ab->add_option("--recipe", aa.recipe, "mp-vs-attention-vs-residual | heads | depth")->required();
  ab->add_option("--dataset", aa.train.dataset)->required();
  ab->add_option("--out", aa.train.out, "output directory")->required();
  ab->add_option("--test-dataset", aa.test_dataset);
  ab->add_option("--test-labels", aa.test_labels);
  ab->add_option("--test-fraction", aa.test_fraction)->capture_default_str();
  ab->add_option("--jobs", aa.jobs)->capture_default_str();
  add_training_flags(ab, aa.train);

  std::string rerun_manifest;
  auto* rr = app.add_subcommand("rerun", "repeat the command recorded in a manifest");
  rr->add_option("manifest", rerun_manifest)->required();

  std::vector<const char*> cargv;
  for (const std::string& s : args) cargv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    if (!app.get_subcommands().empty()) {
      err << app.get_subcommands().front()->help();
    }
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gd, args, out);
    if (lab->parsed()) return cmd_label(la, args, out);
    if (tr->parsed()) return cmd_train(ta, *tr, args, out, err);
    if (ev->parsed()) return cmd_eval(ea, args, out);
    if (se->parsed()) return cmd_scale_eval(sa, args, out);
    if (ab->parsed()) return cmd_ablate(aa, *ab, args, out);
    if (rr->parsed()) {
      const RunManifest m = read_manifest(rerun_manifest);
      if (m.argv.empty() || (m.argv.size() > 1 && m.argv[1] == "rerun")) {
        throw UsageError("manifest does not record a re-runnable command");
      }
      return run_cli(m.argv, out, err);
    }
  } catch (const FormatError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace wgnn
