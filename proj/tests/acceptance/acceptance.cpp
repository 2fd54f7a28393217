// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "../oracles.hpp"
#include "tarnet/checkpoint.hpp"
#include "tarnet/cita.hpp"
#include "tarnet/commands.hpp"
#include "tarnet/csv.hpp"
#include "tarnet/dgp.hpp"
#include "tarnet/experiment_config.hpp"
#include "tarnet/io.hpp"
#include "tarnet/json_convert.hpp"
#include "tarnet/metrics.hpp"
#include "tarnet/standardize.hpp"
#include "tarnet/study.hpp"

using namespace tarnet;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) { return format_double(v, digits); }

// CLI chatter would drown the verdict lines.
int quiet_cli(std::vector<std::string> args) {
  std::ostringstream sink;
  auto* old_out = std::cout.rdbuf(sink.rdbuf());
  auto* old_err = std::cerr.rdbuf(sink.rdbuf());
  args.insert(args.begin(), "tltarnet");
  const int rc = run_cli(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  if (rc != kExitOk) std::cerr << "tltarnet " << args.at(1) << " exited " << rc << ":\n" << sink.str();
  return rc;
}

class Suite {
 public:
  void run(int id, const std::string& name, const std::function<Verdict()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = body();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures_ += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " [" << (id ? std::to_string(id) : "csv") << "] " << name
              << ": " << v.detail << " (" << fmt(secs, 3) << " s)" << std::endl;
  }
  int failures() const { return failures_; }

 private:
  int failures_ = 0;
};

const ScenarioSummary& find(const std::vector<ScenarioSummary>& s, std::size_t nt, const std::string& sampling,
                            const std::string& method) {
  for (const auto& x : s) {
    if (x.key.n_target == nt && x.key.sampling == sampling && x.key.method == method) return x;
  }
  throw std::runtime_error("no summary row for " + std::to_string(nt) + "/" + sampling + "/" + method);
}

// --- synthetic household survey -------------------------------------------

// Shaped like the empirical application: five household covariates, a binary
// "mother does most firewood collection" treatment, weekly study minutes.
// Treatment depends on observed covariates only, so effects are identified.
Dataset survey_region(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> caste(1, 6);
  std::bernoulli_distribution grid(0.7);
  std::exponential_distribution<double> km(0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset d;
  d.dim = 5;
  d.covariate_names = {"income", "maternal_education", "caste_religion", "electricity", "school_distance"};
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = z(rng);
    const double income = 60.0 * std::exp(0.6 * zi);
    const double edu = std::clamp(std::round(5.0 + 4.0 * z(rng)), 0.0, 15.0);
    const double cr = caste(rng);
    const double el = grid(rng) ? 1.0 : 0.0;
    const double dist = km(rng);
    const double ze = (edu - 5.0) / 4.0, zd = (dist - 2.0) / 2.0;
    const double y0 = 900 + 60 * zi + 50 * ze + 40 * el - 30 * zd + 15 * (cr - 3.5) + 220 * z(rng);
    const double tau = -110 + 25 * zi - 20 * ze;
    const int t = u(rng) < expit(0.3 * zi - 0.2 * zd) ? 1 : 0;
    d.X.insert(d.X.end(), {income, edu, cr, el, dist});
    d.t.push_back(t);
    d.y0.push_back(y0);
    d.y1.push_back(y0 + tau);
    d.tau.push_back((y0 + tau) - y0);
    d.y.push_back(t ? y0 + tau : y0);
  }
  d.validate();
  return d;
}

// The simulation's selection rule, applied to the standardized baseline outcome.
Dataset biased_survey_target(const Dataset& region, std::size_t n_t, std::uint64_t seed) {
  Dataset t = subsample_random(region, n_t, seed);
  double m = 0, s = 0;
  for (double v : region.y0) m += v / region.size();
  for (double v : region.y0) s += (v - m) * (v - m) / (region.size() - 1);
  s = std::sqrt(s);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.t[i] = u(rng) < expit((t.y0[i] - m) / s) ? 1 : 0;
    t.y[i] = t.t[i] ? t.y1[i] : t.y0[i];
  }
  return t;
}

// Survey export: an id column, observed columns only, and a few incomplete rows.
std::string survey_csv(const Dataset& d, std::size_t incomplete, std::uint64_t seed) {
  std::string out = "hhid,income,maternal_education,caste_religion,electricity,school_distance,firewood,study_minutes\n";
  auto row = [&](std::size_t id, std::size_t i, int na_col) {
    std::string line = std::to_string(id);
    for (std::size_t k = 0; k < d.dim; ++k) {
      line += ',' + (na_col == static_cast<int>(k) ? std::string("NA") : format_double(d.X[i * d.dim + k]));
    }
    line += ',' + std::to_string(d.t[i]) + ',' + format_double(d.y[i]) + '\n';
    return line;
  };
  for (std::size_t i = 0; i < d.size(); ++i) out += row(100000 + i, i, -1);
  std::mt19937_64 rng(seed);
  for (std::size_t j = 0; j < incomplete; ++j) out += row(900000 + j, rng() % d.size(), static_cast<int>(rng() % 5));
  return out;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Mean predicted effect of a train-source/transfer output on a survey file,
// in outcome units.
double model_mean_ite(const fs::path& run_dir, const fs::path& csv) {
  const Checkpoint ck = load_checkpoint(run_dir / "model.json");
  const TarnetModel m(ck.spec, ck.store);
  CsvSchema schema;
  schema.treatment = "firewood";
  schema.outcome = "study_minutes";
  schema.covariates = {"income", "maternal_education", "caste_religion", "electricity", "school_distance"};
  const auto tr = json::parse(read_file(run_dir / "transform.json")).get<StandardizeTransform>();
  const Dataset d = apply_transform(load_csv(csv, schema).data, tr);
  return mean_ite(m, DataView(d)) * tr.outcome_sd;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string work = "acceptance_work";
  std::string desk = "configs/desk.json";
  std::string smoke = "configs/smoke.json";
  bool resume = false;
  std::size_t csv_runs = 10;
  app.add_option("--work", work, "Scratch directory for study runs")->capture_default_str();
  app.add_option("--desk-config", desk, "Desk-scale study config")->capture_default_str();
  app.add_option("--smoke-config", smoke, "Small config for the replay check")->capture_default_str();
  app.add_flag("--resume", resume, "Reuse completed desk-study units from an earlier run");
  app.add_option("--csv-runs", csv_runs, "Seeded runs of the CSV workflow")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const fs::path wd = work;
  if (!resume) fs::remove_all(wd);
  fs::create_directories(wd);
  Suite suite;

  suite.run(1, "parameter count", [] {
    const std::size_t n = parameter_count({5, {16, 16, 16}, {8, 8}});
    return Verdict{n == 1074, "count " + std::to_string(n)};
  });

  // Criteria 2-4 share one desk-scale study.
  const ExperimentConfig desk_cfg = load_config(desk);
  std::vector<ScenarioSummary> summaries;
  std::string study_error;
  {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      StudyOptions so;
      so.resume = resume;
      const auto r = run_full_study(desk_cfg, wd / "desk", so);
      if (!r.complete) throw std::runtime_error(std::to_string(r.failures.size()) + " units failed");
      summaries = run_evaluate(wd / "desk").summaries;
      std::cout << "desk study: " << r.computed << " units computed, " << r.reused << " reused in "
                << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 4)
                << " s" << std::endl;
    } catch (const std::exception& e) {
      study_error = e.what();
    }
  }
  const std::size_t ns = desk_cfg.source_sizes.at(0);
  const std::vector<std::size_t> small_targets{50, 100};

  suite.run(2, "randomized targets unbiased", [&] {
    if (!study_error.empty()) return Verdict{false, "study failed: " + study_error};
    bool ok = true;
    std::string d;
    for (std::size_t nt : small_targets) {
      for (const char* m : {"tarnet", "tl-tarnet"}) {
        const auto& s = find(summaries, nt, "random", m);
        ok = ok && std::fabs(s.mean_ite - 1.0) <= 0.15;
        d += std::string(m) + "@" + std::to_string(nt) + "=" + fmt(s.mean_ite) + " ";
      }
    }
    return Verdict{ok, d + "(|mean - 1| <= 0.15, R=" + std::to_string(desk_cfg.replications) + ")"};
  });

  suite.run(3, "bias reduction on biased targets", [&] {
    if (!study_error.empty()) return Verdict{false, "study failed: " + study_error};
    bool ok = true;
    std::string d;
    for (std::size_t nt : small_targets) {
      const auto& base = find(summaries, nt, "biased", "tarnet");
      const auto& tl = find(summaries, nt, "biased", "tl-tarnet");
      ok = ok && base.mean_ite > 1.3 && std::fabs(tl.bias) <= 0.5 * std::fabs(base.bias);
      d += "N_T=" + std::to_string(nt) + " tarnet " + fmt(base.mean_ite) + " tl " + fmt(tl.mean_ite) + "; ";
    }
    return Verdict{ok, d + "(tarnet > 1.3, |bias tl| <= 0.5 |bias tarnet|)"};
  });

  suite.run(4, "PEHE improvement", [&] {
    if (!study_error.empty()) return Verdict{false, "study failed: " + study_error};
    bool ok = true;
    std::string d;
    for (const char* smp : {"random", "biased"}) {
      for (std::size_t nt : small_targets) {
        const double b = find(summaries, nt, smp, "tarnet").pehe_sq_mean;
        const double t = find(summaries, nt, smp, "tl-tarnet").pehe_sq_mean;
        ok = ok && t < b;
        d += std::string(smp) + "@" + std::to_string(nt) + " " + fmt(t) + "<" + fmt(b) + " ";
      }
    }
    return Verdict{ok, d};
  });

  // Source models trained by the desk study, rebuilt with the same seeds.
  auto desk_source = [&](std::size_t r) {
    const Checkpoint ck = load_checkpoint(wd / "desk" / "units" / ("ns" + std::to_string(ns) + "_r" + std::to_string(r)) /
                                          "source_model.json");
    return std::pair{TarnetModel(ck.spec, ck.store),
                     gen_source(ns, desk_cfg.dgp, unit_seeds(desk_cfg.master_seed, ns, r).source_data)};
  };

  suite.run(5, "CITA ordering", [&] {
    const std::size_t reps = 10, nt = 250;
    double random = 0, biased = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto [model, source] = desk_source(r);
      const auto f_ss = diag_fisher(model, DataView(source), HeadOrder::identity);
      const auto sr = cell_seeds(desk_cfg.master_seed, ns, r, nt, Origin::target_random);
      const auto sb = cell_seeds(desk_cfg.master_seed, ns, r, nt, Origin::target_biased);
      const Dataset tr = subsample_random(source, nt, sr.target_data);
      const Dataset tb = subsample_biased(source, nt, sb.target_data);
      random += cita_symmetrized(f_ss, model, DataView(tr), ns).normalized / reps;
      biased += cita_symmetrized(f_ss, model, DataView(tb), ns).normalized / reps;
    }
    return Verdict{random < biased, "random " + fmt(random) + " < biased " + fmt(biased) + " (N_T=250, 10 reps)"};
  });

  suite.run(6, "CITA label-flip identity", [&] {
    const auto [model, source] = desk_source(0);
    Dataset flipped = source;
    for (std::size_t i = 0; i < source.size(); ++i) {
      flipped.t[i] = 1 - source.t[i];
      flipped.y0[i] = source.y1[i];
      flipped.y1[i] = source.y0[i];
      flipped.tau[i] = -source.tau[i];
    }
    flipped.validate();
    const auto s = cita_symmetrized(model, DataView(source), DataView(flipped));
    return Verdict{s.normalized <= 1e-10 && s.raw <= 1e-10 && s.one_sided_normalized > 0.0,
                   "symmetrized " + fmt(s.normalized, 3) + " via " + to_string(s.permutation) +
                       ", one-sided " + fmt(s.one_sided_normalized)};
  });

  suite.run(7, "gradient suite", [] {
    int nets = 0;
    double worst = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto g = oracle::factual_gradient_case(1000 + s);
      nets += g.ok;
      worst = std::max(worst, g.worst_abs);
    }
    int mmd = 0, sk = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      mmd += oracle::ipm_gradient_case(2000 + s, IpmKind::mmd_rbf).ok;
      sk += oracle::ipm_gradient_case(2000 + s, IpmKind::sinkhorn).ok;
    }
    return Verdict{nets == 100 && mmd == 20 && sk == 20,
                   std::to_string(nets) + "/100 networks (max abs diff " + fmt(worst, 2) + "), mmd " +
                       std::to_string(mmd) + "/20, sinkhorn " + std::to_string(sk) + "/20"};
  });

  suite.run(8, "Fisher oracle", [] {
    double worst = 0;
    std::size_t checked = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      std::mt19937_64 rng(s);
      const NetworkSpec spec{1 + s % 3, {1 + s % 3, 2}, s % 2 ? std::vector<std::size_t>{2} : std::vector<std::size_t>{}};
      if (parameter_count(spec) > 30) continue;
      TarnetModel m = TarnetModel::initialize(spec, s);
      std::normal_distribution<double> z(0.0, 0.3);
      for (std::size_t l = 0; l < m.params().layer_count(); ++l) {
        for (double& b : m.mutable_params().mutable_layer(l).biases) b = z(rng);
      }
      const Dataset d = oracle::toy_dataset(30, spec.input_dim, 70 + s);
      for (HeadOrder order : {HeadOrder::identity, HeadOrder::swapped}) {
        const auto f = diag_fisher(m, DataView(d), order);
        const auto ref = oracle::fisher_outer_product(m.params(), spec, d, order == HeadOrder::swapped);
        for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::fabs(f.values[k] - ref[k]));
      }
      ++checked;
    }
    return Verdict{checked > 10 && worst <= 1e-10,
                   std::to_string(checked) + " nets, max abs diff " + fmt(worst, 2)};
  });

  suite.run(9, "Sinkhorn vs sorted W1", [] {
    int ok = 0;
    double worst = 0;
    IpmConfig c;
    c.kind = IpmKind::sinkhorn;
    c.epsilon = 0.01;
    c.max_iters = 2000;
    c.convergence_tol = 1e-9;
    for (std::uint64_t s = 0; s < 50; ++s) {
      std::mt19937_64 rng(7000 + s);
      std::normal_distribution<double> z(0.0, 1.0);
      std::vector<double> a(8), b(8);
      for (double& v : a) v = z(rng);
      for (double& v : b) v = z(rng) + 0.5;
      const double diff = std::fabs(sinkhorn_divergence(SampleSet(8, 1, a), SampleSet(8, 1, b), c).value -
                                    oracle::wasserstein1_sorted(a, b));
      ok += diff <= 0.05;
      worst = std::max(worst, diff);
    }
    return Verdict{ok == 50, std::to_string(ok) + "/50 seeds, worst " + fmt(worst, 3)};
  });

  suite.run(10, "DGP sanity", [] {
    const Dataset s = gen_source(10000, {}, 424242);
    double mt = 0;
    for (double v : s.tau) mt += v / s.size();
    const double c = correlation(std::vector<double>(s.t.begin(), s.t.end()), s.y0);
    int good = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Dataset t = subsample_biased(s, 250, seed);
      double s1 = 0, s0 = 0;
      const double n1 = static_cast<double>(t.treated_count());
      for (std::size_t i = 0; i < t.size(); ++i) (t.t[i] ? s1 : s0) += t.y[i];
      const double dim = s1 / n1 - s0 / (t.size() - n1);
      const double ct = correlation(std::vector<double>(t.t.begin(), t.t.end()), t.y0);
      good += ct > 0.1 && dim > 1.0;
    }
    return Verdict{std::fabs(mt - 1) < 0.05 && std::fabs(c) < 0.05 && good >= 18,
                   "mean tau " + fmt(mt) + ", corr(t,y0) " + fmt(c, 2) + ", biased targets " +
                       std::to_string(good) + "/20"};
  });

  suite.run(11, "manifest replay is byte-identical", [&] {
    const fs::path a = wd / "replay_a", b = wd / "replay_b";
    fs::remove_all(a);
    fs::remove_all(b);
    if (quiet_cli({"full-study", "--config", smoke, "--out", a.string()}) != kExitOk) return Verdict{false, "first run failed"};
    if (quiet_cli({"full-study", "--config", (a / "manifest.json").string(), "--out", b.string()}) != kExitOk) {
      return Verdict{false, "replay failed"};
    }
    std::string d;
    bool ok = true;
    for (const char* f : {"summary.csv", "mean_ite_long.csv", "pehe_long.csv"}) {
      const bool same = read_file(a / f) == read_file(b / f);
      ok = ok && same;
      d += std::string(f) + (same ? " identical " : " DIFFERS ");
    }
    return Verdict{ok, d};
  });

  suite.run(0, "CSV workflow moves target toward source", [&] {
    const std::vector<std::string> cov{"--treatment", "firewood", "--outcome", "study_minutes", "--covariates",
                                       "income", "maternal_education", "caste_religion", "electricity",
                                       "school_distance"};
    ExperimentConfig src_cfg;
    ExperimentConfig base_cfg;
    base_cfg.spec = target_spec_for(base_cfg, 350);
    base_cfg.source_train = base_cfg.target_train;
    const fs::path root = wd / "csv";
    fs::create_directories(root);
    write_file_atomic(root / "source_config.json", config_to_json(src_cfg).dump(2));
    write_file_atomic(root / "baseline_config.json", config_to_json(base_cfg).dump(2));

    int closer = 0;
    std::string d;
    for (std::size_t k = 0; k < csv_runs; ++k) {
      const fs::path dir = root / ("run" + std::to_string(k));
      fs::create_directories(dir);
      const Dataset region = survey_region(1247, 31000 + k);
      const Dataset target = biased_survey_target(region, 350, 32000 + k);
      write_file_atomic(dir / "source.csv", survey_csv(region, 9, k));
      write_file_atomic(dir / "target.csv", survey_csv(target, 0, k));
      const std::string seed = std::to_string(33000 + k);

      auto with = [&](std::vector<std::string> a) {
        a.insert(a.end(), cov.begin(), cov.end());
        a.insert(a.end(), {"--seed", seed});
        return quiet_cli(a);
      };
      if (with({"train-source", "--config", (root / "source_config.json").string(), "--data",
                (dir / "source.csv").string(), "--out", (dir / "source_model").string(), "--standardize",
                "--scale-outcome"}) != kExitOk ||
          with({"transfer", "--model", (dir / "source_model" / "model.json").string(), "--source-data",
                (dir / "source.csv").string(), "--target", (dir / "target.csv").string(), "--transform",
                (dir / "source_model" / "transform.json").string(), "--out", (dir / "transfer").string()}) !=
              kExitOk ||
          with({"train-source", "--config", (root / "baseline_config.json").string(), "--data",
                (dir / "target.csv").string(), "--out", (dir / "baseline").string(), "--standardize",
                "--scale-outcome"}) != kExitOk) {
        return Verdict{false, "run " + std::to_string(k) + ": a subcommand failed"};
      }
      const double source_ite = model_mean_ite(dir / "source_model", dir / "source.csv");
      const double baseline_ite = model_mean_ite(dir / "baseline", dir / "target.csv");
      const json report = json::parse(read_file(dir / "transfer" / "transfer_report.json"));
      const double tl_ite = report.at("mean_ite_after_original_units").get<double>();
      const bool c = std::fabs(tl_ite - source_ite) < std::fabs(baseline_ite - source_ite);
      closer += c;
      d += fmt(source_ite, 4) + "/" + fmt(tl_ite, 4) + "/" + fmt(baseline_ite, 4) + (c ? " " : "* ");
    }
    const int need = static_cast<int>(std::ceil(0.8 * csv_runs));
    return Verdict{closer >= need, std::to_string(closer) + "/" + std::to_string(csv_runs) +
                                       " closer (source/tl/baseline mean ITE, minutes: " + d + ")"};
  });

  std::cout << (suite.failures() == 0 ? "all criteria passed" : std::to_string(suite.failures()) + " failed")
            << std::endl;
  return suite.failures() == 0 ? 0 : 1;
}
