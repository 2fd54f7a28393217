#include "tarnet/commands.hpp"

#include <CLI11.hpp>
#include <iostream>
#include <optional>

#include "tarnet/checkpoint.hpp"
#include "tarnet/cita.hpp"
#include "tarnet/csv.hpp"
#include "tarnet/error.hpp"
#include "tarnet/experiment_config.hpp"
#include "tarnet/io.hpp"
#include "tarnet/json_convert.hpp"
#include "tarnet/standardize.hpp"
#include "tarnet/study.hpp"
#include "tarnet/train.hpp"
#include "tarnet/transfer.hpp"

namespace tarnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::size_t workers = 0;
  bool resume = false;
  std::string data;
  std::string model;
  std::string source_data;
  std::vector<std::string> targets;
  std::string transform;
  bool standardize = false;
  bool scale_outcome = false;
  std::string treatment = "t";
  std::string outcome = "y";
  std::vector<std::string> covariates;
  std::string run;
};

ExperimentConfig config_or_default(const Options& o) {
  if (o.config.empty()) return ExperimentConfig{};
  return load_config(o.config);
}

std::vector<std::string> header_of(const std::string& text) {
  std::vector<std::string> cols;
  std::size_t start = text.rfind("\xEF\xBB\xBF", 0) == 0 ? 3 : 0;
  const auto end = text.find_first_of("\r\n", start);
  const std::string line = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
  std::size_t a = 0;
  for (;;) {
    const auto b = line.find(',', a);
    std::string c = line.substr(a, b == std::string::npos ? std::string::npos : b - a);
    if (c.size() >= 2 && c.front() == '"' && c.back() == '"') c = c.substr(1, c.size() - 2);
    cols.push_back(c);
    if (b == std::string::npos) break;
    a = b + 1;
  }
  return cols;
}

// Potential-outcome columns are picked up when the file has all three.
Dataset load_dataset(const std::string& path, const Options& o) {
  const std::string text = read_file(path);
  CsvSchema schema;
  schema.treatment = o.treatment;
  schema.outcome = o.outcome;
  schema.covariates = o.covariates;
  const auto cols = header_of(text);
  auto has = [&](const char* c) { return std::find(cols.begin(), cols.end(), c) != cols.end(); };
  if (has("y0") && has("y1") && has("tau")) {
    schema.y0 = "y0";
    schema.y1 = "y1";
    schema.tau = "tau";
  }
  CsvLoadResult r = parse_csv(text, schema);
  if (r.dropped_rows > 0) {
    std::cerr << path << ": dropped " << r.dropped_rows << " rows with missing values\n";
  }
  return std::move(r.data);
}

std::optional<StandardizeTransform> load_transform(const std::string& path) {
  if (path.empty()) return std::nullopt;
  try {
    return json::parse(read_file(path)).get<StandardizeTransform>();
  } catch (const json::exception& e) {
    throw DataError("transform " + path + ": " + e.what());
  }
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

int cmd_simulate(const Options& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.master_seed = *o.seed;
  const auto r = run_simulate(cfg, o.out);
  std::cout << "wrote " << r.source_files.size() << " source and " << r.target_files.size()
            << " target datasets to " << o.out << "\n";
  return kExitOk;
}

int cmd_train_source(const Options& o) {
  ExperimentConfig cfg = config_or_default(o);
  TrainConfig tc = cfg.source_train;
  if (o.seed) tc.seed = *o.seed;
  Dataset data = load_dataset(o.data, o);
  const fs::path out = o.out;
  ensure_dir(out);
  json manifest = {{"kind", "train-source"},
                   {"tool_version", kToolVersion},
                   {"config_hash", config_hash(cfg)},
                   {"train", tc},
                   {"data", o.data},
                   {"rows", data.size()}};
  if (o.standardize || o.scale_outcome) {
    auto [scaled, tr] = standardize(data, StandardizeOptions{o.scale_outcome});
    data = std::move(scaled);
    write_file_atomic(out / "transform.json", json(tr).dump(2) + "\n");
    manifest["transform"] = "transform.json";
  }
  NetworkSpec spec = cfg.spec;
  spec.input_dim = data.dim;
  const TrainResult r = train_source(DataView(data), spec, tc);
  save_checkpoint(r.model.params(), r.model.spec(), out / "model.json");
  write_file_atomic(out / "history.csv", history_to_csv(r.history));
  manifest["checkpoint"] = "model.json";
  manifest["history"] = "history.csv";
  manifest["final_factual"] = r.history.factual.empty() ? 0.0 : r.history.factual.back();
  write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "trained " << parameter_count(spec) << " parameters for " << tc.epochs
            << " epochs; checkpoint " << (out / "model.json").string() << "\n";
  return kExitOk;
}

int cmd_transfer(const Options& o) {
  ExperimentConfig cfg = config_or_default(o);
  TransferConfig tc = cfg.transfer;
  if (o.seed) tc.seed = *o.seed;
  const Checkpoint ck = load_checkpoint(o.model);
  const TarnetModel source_model(ck.spec, ck.store);
  Dataset source = load_dataset(o.source_data, o);
  Dataset target = load_dataset(o.targets.at(0), o);
  const auto tr = load_transform(o.transform);
  if (tr) {
    source = apply_transform(source, *tr);
    target = apply_transform(target, *tr);
  }
  const TransferResult r = transfer_pipeline(source_model, DataView(source), DataView(target), tc);
  const fs::path out = o.out;
  ensure_dir(out);
  save_checkpoint(r.model.params(), r.model.spec(), out / "model.json");
  json report = report_to_json(r.report);
  double before = r.report.mean_ite_before;
  double after = r.report.mean_ite_after;
  if (tr && tr->outcome_scaled) {
    before *= tr->outcome_sd;
    after *= tr->outcome_sd;
    report["mean_ite_before_original_units"] = before;
    report["mean_ite_after_original_units"] = after;
  }
  write_file_atomic(out / "transfer_report.json", report.dump(2) + "\n");
  write_file_atomic(out / "phase1_trace.csv", alignment_trace_to_csv(r.report.phase1_trace));
  write_file_atomic(out / "phase2_history.csv", history_to_csv(r.report.phase2_history));
  json manifest = {{"kind", "transfer"},
                   {"tool_version", kToolVersion},
                   {"config_hash", config_hash(cfg)},
                   {"transfer", tc},
                   {"source_checkpoint", o.model},
                   {"source_data", o.source_data},
                   {"target", o.targets.at(0)},
                   {"checkpoint", "model.json"},
                   {"report", "transfer_report.json"}};
  write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "mean ITE on target: " << format_double(before, 6) << " before, "
            << format_double(after, 6) << " after transfer\n";
  return kExitOk;
}

int cmd_cita(const Options& o) {
  const Checkpoint ck = load_checkpoint(o.model);
  const TarnetModel model(ck.spec, ck.store);
  Dataset source = load_dataset(o.source_data, o);
  const auto tr = load_transform(o.transform);
  if (tr) source = apply_transform(source, *tr);
  const FisherDiagonal f_ss = diag_fisher(model, DataView(source), HeadOrder::identity);
  std::string csv = "source_checkpoint,target_file,raw,normalized,permutation,n_source,n_target\n";
  for (const auto& path : o.targets) {
    Dataset target = load_dataset(path, o);
    if (tr) target = apply_transform(target, *tr);
    const CitaScore s = cita_symmetrized(f_ss, model, DataView(target), source.size());
    csv += o.model + ',' + path + ',' + format_double(s.raw) + ',' + format_double(s.normalized) +
           ',' + to_string(s.permutation) + ',' + std::to_string(s.n_source) + ',' +
           std::to_string(s.n_target) + '\n';
  }
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    write_file_atomic(o.out, csv);
  }
  return kExitOk;
}

int cmd_evaluate(const Options& o) {
  const std::string dir = o.run.empty() ? o.out : o.run;
  const auto r = run_evaluate(dir);
  std::cout << "summarized " << r.results.size() << " results into " << r.summaries.size()
            << " rows: " << (fs::path(dir) / "summary.csv").string() << "\n";
  return kExitOk;
}

int cmd_full_study(const Options& o) {
  ExperimentConfig cfg = load_config(o.config);
  if (o.seed) cfg.master_seed = *o.seed;
  StudyOptions so;
  so.workers = o.workers > 0 ? o.workers : cfg.workers;
  so.resume = o.resume;
  const StudyOutcome r = run_full_study(cfg, o.out, so);
  std::cout << r.computed << " units computed, " << r.reused << " reused, " << r.failures.size()
            << " failed of " << r.total_units << "\n";
  for (const auto& f : r.failures) std::cerr << "failed: " << f << "\n";
  if (r.complete) return kExitOk;
  return r.numerical_failure ? kExitNumerical : kExitData;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Two-headed treatment-effect networks with transfer to small targets", "tltarnet"};
  app.require_subcommand(1);
  Options o;
  auto seed_opt = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { o.seed = v; }, "Seed override");
  };
  auto data_opts = [&](CLI::App* sub) {
    sub->add_option("--treatment", o.treatment, "Treatment column")->capture_default_str();
    sub->add_option("--outcome", o.outcome, "Outcome column")->capture_default_str();
    sub->add_option("--covariates", o.covariates, "Covariate columns (default: all others)")
        ->delimiter(',');
  };

  auto* sim = app.add_subcommand("simulate", "Generate source and target datasets");
  sim->add_option("--config", o.config, "Study config (JSON)")->required();
  sim->add_option("--out", o.out, "Output directory")->required();
  seed_opt(sim);

  auto* train = app.add_subcommand("train-source", "Train a network on a CSV dataset");
  train->add_option("--config", o.config, "Config (JSON); defaults when absent");
  train->add_option("--data", o.data, "Training CSV")->required();
  train->add_option("--out", o.out, "Output directory")->required();
  train->add_flag("--standardize", o.standardize, "Standardize covariates first");
  train->add_flag("--scale-outcome", o.scale_outcome, "Also standardize the outcome");
  seed_opt(train);
  data_opts(train);

  auto* xfer = app.add_subcommand("transfer", "Transfer a trained network to a target CSV");
  xfer->add_option("--config", o.config, "Config (JSON); defaults when absent");
  xfer->add_option("--model", o.model, "Source checkpoint")->required();
  xfer->add_option("--source-data", o.source_data, "Source CSV")->required();
  xfer->add_option("--target", o.targets, "Target CSV")->required()->expected(1);
  xfer->add_option("--transform", o.transform, "transform.json written by train-source");
  xfer->add_option("--out", o.out, "Output directory")->required();
  seed_opt(xfer);
  data_opts(xfer);

  auto* cita = app.add_subcommand("cita", "Task affinity of target files to a source model");
  cita->add_option("--model", o.model, "Source checkpoint")->required();
  cita->add_option("--source-data", o.source_data, "Source CSV")->required();
  cita->add_option("--target", o.targets, "Target CSV(s)")->required();
  cita->add_option("--transform", o.transform, "transform.json written by train-source");
  cita->add_option("--out", o.out, "Output CSV (default: stdout)");
  data_opts(cita);

  auto* eval = app.add_subcommand("evaluate", "Summarize a full-study run directory");
  eval->add_option("--run", o.run, "Run directory");
  eval->add_option("--out", o.out, "Run directory (alias of --run)");

  auto* full = app.add_subcommand("full-study", "Run the simulation study end to end");
  full->add_option("--config", o.config, "Study config or run manifest (JSON)")->required();
  full->add_option("--out", o.out, "Output directory")->required();
  full->add_option("--workers", o.workers, "Concurrent replications");
  full->add_flag("--resume", o.resume, "Skip units already completed");
  seed_opt(full);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(o);
    if (*train) return cmd_train_source(o);
    if (*xfer) return cmd_transfer(o);
    if (*cita) return cmd_cita(o);
    if (*eval) {
      if (o.run.empty() && o.out.empty()) {
        std::cerr << "evaluate: --run DIR is required\n";
        return kExitUsage;
      }
      return cmd_evaluate(o);
    }
    if (*full) return cmd_full_study(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidSpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace tarnet
