#include "tarnet/study.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <thread>

#include "tarnet/checkpoint.hpp"
#include "tarnet/csv.hpp"
#include "tarnet/dgp.hpp"
#include "tarnet/error.hpp"
#include "tarnet/io.hpp"
#include "tarnet/json_convert.hpp"
#include "tarnet/train.hpp"

namespace tarnet {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string unit_name(std::size_t ns, std::size_t r) {
  return "ns" + std::to_string(ns) + "_r" + std::to_string(r);
}

std::string cell_name(std::size_t nt, Origin sampling) {
  return "nt" + std::to_string(nt) + "_" + sampling_name(sampling);
}

struct CellKey {
  std::size_t n_target;
  Origin sampling;
};

std::vector<CellKey> cells_for(const ExperimentConfig& cfg, std::size_t ns) {
  std::vector<CellKey> out;
  for (std::size_t nt : cfg.target_sizes) {
    if (cell_excluded(cfg, ns, nt)) continue;
    for (Origin s : cfg.sampling) out.push_back({nt, s});
  }
  return out;
}

Dataset draw_target(const Dataset& source, std::size_t nt, Origin sampling, std::uint64_t seed) {
  return sampling == Origin::target_random ? subsample_random(source, nt, seed)
                                           : subsample_biased(source, nt, seed);
}

json seeds_json(const UnitSeeds& s) {
  return {{"source_data", s.source_data}, {"source_train", s.source_train}};
}

json seeds_json(const CellSeeds& s) {
  return {{"target_data", s.target_data},
          {"baseline_train", s.baseline_train},
          {"transfer", s.transfer}};
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

json read_json(const fs::path& p) {
  try {
    return json::parse(read_file(p));
  } catch (const json::parse_error& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

}  // namespace

SimulateOutput run_simulate(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  const fs::path data_dir = out_dir / "data";
  ensure_dir(data_dir);
  SimulateOutput out;
  json datasets = json::array();
  for (std::size_t ns : cfg.source_sizes) {
    for (std::size_t r = 0; r < cfg.replications; ++r) {
      const UnitSeeds us = unit_seeds(cfg.master_seed, ns, r);
      const Dataset source = gen_source(ns, cfg.dgp, us.source_data);
      const std::string sname = "source_" + unit_name(ns, r) + ".csv";
      write_csv(source, data_dir / sname);
      write_dataset_metadata(data_dir / sname,
                             DatasetMetadata{Origin::source, us.source_data, ns, cfg.dgp, ""});
      out.source_files.push_back(data_dir / sname);
      datasets.push_back({{"file", "data/" + sname},
                          {"origin", to_string(Origin::source)},
                          {"n_source", ns},
                          {"replication", r},
                          {"seed", us.source_data}});
      for (const auto& cell : cells_for(cfg, ns)) {
        const CellSeeds cs = cell_seeds(cfg.master_seed, ns, r, cell.n_target, cell.sampling);
        const Dataset target = draw_target(source, cell.n_target, cell.sampling, cs.target_data);
        const std::string tname = "target_ns" + std::to_string(ns) + "_" +
                                  cell_name(cell.n_target, cell.sampling) + "_r" +
                                  std::to_string(r) + ".csv";
        write_csv(target, data_dir / tname);
        write_dataset_metadata(data_dir / tname, DatasetMetadata{target.origin, cs.target_data,
                                                                 cell.n_target, cfg.dgp,
                                                                 "data/" + sname});
        out.target_files.push_back(data_dir / tname);
        datasets.push_back({{"file", "data/" + tname},
                            {"origin", to_string(target.origin)},
                            {"n_source", ns},
                            {"n_target", cell.n_target},
                            {"replication", r},
                            {"seed", cs.target_data},
                            {"parent", "data/" + sname}});
      }
    }
  }
  json manifest = {{"kind", "simulate"},
                   {"tool_version", kToolVersion},
                   {"config_hash", config_hash(cfg)},
                   {"config", config_to_json(cfg)},
                   {"datasets", datasets}};
  write_file_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return out;
}

UnitResult run_unit(const ExperimentConfig& cfg, std::size_t ns, std::size_t r) {
  UnitResult u;
  u.n_source = ns;
  u.replication = r;
  u.seeds = unit_seeds(cfg.master_seed, ns, r);
  const Dataset source = gen_source(ns, cfg.dgp, u.seeds.source_data);
  AccessLog source_log;
  const DataView sview(source, &source_log);

  TrainConfig stc = cfg.source_train;
  stc.seed = u.seeds.source_train;
  TrainResult trained = train_source(sview, source_spec(cfg), stc);
  u.source_history = trained.history;
  const TarnetModel& src = trained.model;

  std::optional<FisherDiagonal> f_ss;
  if (cfg.compute_cita) f_ss = diag_fisher(src, DataView(source), HeadOrder::identity);

  for (const auto& key : cells_for(cfg, ns)) {
    CellResult c;
    c.n_target = key.n_target;
    c.sampling = key.sampling;
    c.seeds = cell_seeds(cfg.master_seed, ns, r, key.n_target, key.sampling);
    const Dataset target = draw_target(source, key.n_target, key.sampling, c.seeds.target_data);
    const DataView tview(target);

    const std::size_t reads_before = source_log.total();
    TrainConfig btc = cfg.target_train;
    btc.seed = c.seeds.baseline_train;
    TrainResult baseline = train_source(tview, target_spec_for(cfg, key.n_target), btc);
    c.baseline_source_reads = source_log.total() - reads_before;

    TransferConfig tcfg = cfg.transfer;
    tcfg.seed = c.seeds.transfer;
    TransferResult tl = transfer_pipeline(src, sview, tview, tcfg);

    if (f_ss) c.cita = cita_symmetrized(*f_ss, src, tview, ns);

    const ScenarioKey base{ns, key.n_target, sampling_name(key.sampling), "tarnet"};
    auto score = [&](const TarnetModel& m, const std::string& method, std::uint64_t seed) {
      const auto tau_hat = predict_ite(m, tview);
      ReplicationResult rr;
      rr.key = base;
      rr.key.method = method;
      rr.replication = r;
      rr.seed = seed;
      rr.mean_ite = mean_ite(tau_hat);
      rr.pehe = pehe(tau_hat, target.tau);
      if (c.cita) rr.cita = c.cita->normalized;
      return rr;
    };
    c.tarnet = score(baseline.model, "tarnet", c.seeds.baseline_train);
    c.tl_tarnet = score(tl.model, "tl-tarnet", c.seeds.transfer);
    c.report = std::move(tl.report);
    c.baseline_model = std::move(baseline.model);
    c.transfer_model = std::move(tl.model);
    u.cells.push_back(std::move(c));
  }
  u.source_model = std::move(trained.model);
  return u;
}

namespace {

const char* kResultsHeader =
    "n_source,n_target,sampling,method,replication,data_seed,train_seed,mean_ite,pehe_sq,"
    "pehe_rmse,cita,cita_raw,cita_permutation,checkpoint\n";

// Writes everything for one unit; unit.json goes last and marks completion.
json write_unit(const UnitResult& u, const fs::path& root, const std::string& hash) {
  const std::string name = unit_name(u.n_source, u.replication);
  const fs::path dir = root / "units" / name;
  ensure_dir(dir);
  save_checkpoint(u.source_model->params(), u.source_model->spec(), dir / "source_model.json");
  write_file_atomic(dir / "source_history.csv", history_to_csv(u.source_history));

  std::string results = kResultsHeader;
  json cells = json::array();
  for (const auto& c : u.cells) {
    const std::string cname = cell_name(c.n_target, c.sampling);
    const fs::path cdir = dir / "cells" / cname;
    ensure_dir(cdir);
    const std::string base_ckpt = "cells/" + cname + "/tarnet_model.json";
    const std::string tl_ckpt = "cells/" + cname + "/tl_tarnet_model.json";
    save_checkpoint(c.baseline_model->params(), c.baseline_model->spec(), dir / base_ckpt);
    save_checkpoint(c.transfer_model->params(), c.transfer_model->spec(), dir / tl_ckpt);
    write_file_atomic(cdir / "transfer_report.json", report_to_json(c.report).dump(2) + "\n");
    write_file_atomic(cdir / "phase1_trace.csv", alignment_trace_to_csv(c.report.phase1_trace));
    write_file_atomic(cdir / "phase2_history.csv", history_to_csv(c.report.phase2_history));
    for (const auto* rr : {&c.tarnet, &c.tl_tarnet}) {
      results += std::to_string(u.n_source) + ',' + std::to_string(c.n_target) + ',' +
                 rr->key.sampling + ',' + rr->key.method + ',' + std::to_string(u.replication) +
                 ',' + std::to_string(c.seeds.target_data) + ',' + std::to_string(rr->seed) + ',' +
                 format_double(rr->mean_ite) + ',' + format_double(rr->pehe) + ',' +
                 format_double(std::sqrt(rr->pehe)) + ',' +
                 (c.cita ? format_double(c.cita->normalized) : "") + ',' +
                 (c.cita ? format_double(c.cita->raw) : "") + ',' +
                 (c.cita ? to_string(c.cita->permutation) : "") + ',' +
                 (rr == &c.tarnet ? base_ckpt : tl_ckpt) + '\n';
    }
    cells.push_back({{"n_target", c.n_target},
                     {"sampling", sampling_name(c.sampling)},
                     {"seeds", seeds_json(c.seeds)},
                     {"checkpoints", {{"tarnet", base_ckpt}, {"tl-tarnet", tl_ckpt}}}});
  }
  write_file_atomic(dir / "results.csv", results);
  json unit = {{"unit", name},
               {"n_source", u.n_source},
               {"replication", u.replication},
               {"status", "done"},
               {"config_hash", hash},
               {"seeds", seeds_json(u.seeds)},
               {"source_checkpoint", "source_model.json"},
               {"results", "results.csv"},
               {"cells", cells}};
  write_file_atomic(dir / "unit.json", unit.dump(2) + "\n");
  return unit;
}

struct UnitSlot {
  std::size_t n_source = 0;
  std::size_t replication = 0;
  std::string status = "pending";
  std::string error;
  bool numerical = false;
  json record;
};

std::optional<json> completed_record(const fs::path& dir, const std::string& hash) {
  const fs::path p = dir / "unit.json";
  if (!fs::exists(p)) return std::nullopt;
  try {
    json j = json::parse(read_file(p));
    if (j.value("status", "") == "done" && j.value("config_hash", "") == hash &&
        fs::exists(dir / "results.csv")) {
      return j;
    }
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

json manifest_json(const ExperimentConfig& cfg, const std::string& hash,
                   const std::vector<UnitSlot>& slots, bool complete) {
  json units = json::array();
  for (const auto& s : slots) {
    const std::string name = unit_name(s.n_source, s.replication);
    const UnitSeeds seeds = unit_seeds(cfg.master_seed, s.n_source, s.replication);
    json u = {{"unit", name},
              {"n_source", s.n_source},
              {"replication", s.replication},
              {"status", s.status},
              {"seeds", seeds_json(seeds)},
              {"dir", "units/" + name}};
    if (s.status == "done") {
      u["source_checkpoint"] = "units/" + name + "/source_model.json";
      u["results"] = "units/" + name + "/results.csv";
      u["cells"] = s.record.value("cells", json::array());
    }
    if (!s.error.empty()) u["error"] = s.error;
    units.push_back(std::move(u));
  }
  return {{"kind", "full-study"},
          {"tool_version", kToolVersion},
          {"config_hash", hash},
          {"config", config_to_json(cfg)},
          {"complete", complete},
          {"units", units}};
}

}  // namespace

StudyOutcome run_full_study(const ExperimentConfig& cfg, const fs::path& out_dir,
                            const StudyOptions& options) {
  cfg.validate();
  if (options.workers < 1) throw ConfigError("full-study: workers must be >= 1");
  ensure_dir(out_dir);
  const std::string hash = config_hash(cfg);
  const fs::path manifest_path = out_dir / "manifest.json";
  if (options.resume && fs::exists(manifest_path)) {
    const json old = read_json(manifest_path);
    if (old.value("config_hash", "") != hash) {
      throw ConfigError("resume: " + manifest_path.string() +
                        " was written for a different configuration");
    }
  }

  std::vector<UnitSlot> slots;
  for (std::size_t ns : cfg.source_sizes) {
    for (std::size_t r = 0; r < cfg.replications; ++r) {
      UnitSlot s;
      s.n_source = ns;
      s.replication = r;
      if (options.resume) {
        if (auto rec = completed_record(out_dir / "units" / unit_name(ns, r), hash)) {
          s.status = "done";
          s.record = std::move(*rec);
        }
      }
      slots.push_back(std::move(s));
    }
  }
  StudyOutcome outcome;
  outcome.total_units = slots.size();
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].status == "done") {
      ++outcome.reused;
    } else {
      todo.push_back(i);
    }
  }
  write_file_atomic(manifest_path, manifest_json(cfg, hash, slots, false).dump(2) + "\n");

  const std::size_t limit = std::min(todo.size(), options.stop_after.value_or(todo.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= limit) return;
      UnitSlot& slot = slots[todo[k]];
      // Each worker only touches its own slot and unit directory.
      try {
        const UnitResult u = run_unit(cfg, slot.n_source, slot.replication);
        slot.record = write_unit(u, out_dir, hash);
        slot.status = "done";
      } catch (const std::exception& e) {
        slot.status = "failed";
        slot.error = e.what();
        slot.numerical = dynamic_cast<const NumericalError*>(&e) != nullptr;
        try {
          const fs::path dir = out_dir / "units" / unit_name(slot.n_source, slot.replication);
          ensure_dir(dir);
          write_file_atomic(dir / "unit.json", json{{"status", "failed"},
                                                    {"config_hash", hash},
                                                    {"error", slot.error}}
                                                       .dump(2) + "\n");
        } catch (const std::exception&) {
        }
      }
    }
  };
  const std::size_t nthreads = std::min(options.workers, std::max<std::size_t>(limit, 1));
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < nthreads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t k = 0; k < limit; ++k) {
    const UnitSlot& s = slots[todo[k]];
    if (s.status == "done") {
      ++outcome.computed;
    } else {
      outcome.failures.push_back(unit_name(s.n_source, s.replication) + ": " + s.error);
      outcome.numerical_failure = outcome.numerical_failure || s.numerical;
    }
  }
  outcome.complete = std::all_of(slots.begin(), slots.end(),
                                 [](const UnitSlot& s) { return s.status == "done"; });
  write_file_atomic(manifest_path,
                    manifest_json(cfg, hash, slots, outcome.complete).dump(2) + "\n");
  if (outcome.complete) run_evaluate(out_dir);
  return outcome;
}

std::vector<ReplicationResult> parse_results_csv(const std::string& text) {
  std::vector<ReplicationResult> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    return DataError("results.csv line " + std::to_string(line_no) + ": " + why);
  };
  auto to_size = [&](const std::string& s) {
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw fail("bad integer '" + s + "'");
    return v;
  };
  auto to_real = [&](const std::string& s) {
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw fail("bad number '" + s + "'");
    return v;
  };
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line_no == 1 || line.empty()) continue;
    std::vector<std::string> f;
    std::size_t a = 0;
    for (;;) {
      const auto b = line.find(',', a);
      f.push_back(line.substr(a, b == std::string::npos ? std::string::npos : b - a));
      if (b == std::string::npos) break;
      a = b + 1;
    }
    if (f.size() != 14) throw fail("expected 14 fields, found " + std::to_string(f.size()));
    ReplicationResult r;
    r.key = ScenarioKey{to_size(f[0]), to_size(f[1]), f[2], f[3]};
    r.replication = to_size(f[4]);
    r.seed = to_size(f[6]);
    r.mean_ite = to_real(f[7]);
    r.pehe = to_real(f[8]);
    if (!f[10].empty()) r.cita = to_real(f[10]);
    out.push_back(std::move(r));
  }
  return out;
}

EvaluateOutput run_evaluate(const fs::path& run_dir) {
  const fs::path manifest_path = run_dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw DataError("no runs found in " + run_dir.string());
  const json manifest = read_json(manifest_path);
  if (manifest.value("kind", "") != "full-study" || !manifest.contains("units") ||
      manifest["units"].empty()) {
    throw DataError("no runs found in " + run_dir.string());
  }
  const ExperimentConfig cfg = config_from_json(manifest.at("config"));

  EvaluateOutput out;
  std::vector<std::string> missing;
  for (const auto& u : manifest["units"]) {
    const std::string name = u.value("unit", "?");
    const std::string status = u.value("status", "pending");
    const fs::path results = run_dir / "units" / name / "results.csv";
    if (status != "done") {
      missing.push_back(name + " (" + status + ")");
      continue;
    }
    if (!fs::exists(results)) {
      missing.push_back(name + " (results.csv missing)");
      continue;
    }
    auto rows = parse_results_csv(read_file(results));
    if (rows.empty()) {
      missing.push_back(name + " (results.csv empty)");
      continue;
    }
    out.results.insert(out.results.end(), rows.begin(), rows.end());
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += "\n  " + m;
    throw DataError("incomplete runs in " + run_dir.string() + ":" + list);
  }
  out.summaries = summarize(out.results, cfg.dgp.beta);
  write_file_atomic(run_dir / "summary.csv", summary_to_csv(out.summaries));

  std::string ite = "n_source,n_target,sampling,method,R,mean_ite,se,bias\n";
  std::string pe = "n_source,n_target,sampling,method,R,pehe_sq_mean,pehe_rmse_mean\n";
  for (const auto& s : out.summaries) {
    const std::string key = std::to_string(s.key.n_source) + ',' + std::to_string(s.key.n_target) +
                            ',' + s.key.sampling + ',' + s.key.method + ',' +
                            std::to_string(s.replications) + ',';
    ite += key + format_double(s.mean_ite) + ',' + (s.se ? format_double(*s.se) : "") + ',' +
           format_double(s.bias) + '\n';
    pe += key + format_double(s.pehe_sq_mean) + ',' + format_double(s.pehe_rmse_mean) + '\n';
  }
  write_file_atomic(run_dir / "mean_ite_long.csv", ite);
  write_file_atomic(run_dir / "pehe_long.csv", pe);
  return out;
}

}  // namespace tarnet
