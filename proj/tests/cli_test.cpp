#include <gtest/gtest.h>

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tarnet/commands.hpp"
#include "tarnet/error.hpp"
#include "tarnet/experiment_config.hpp"
#include "tarnet/io.hpp"
#include "tarnet/study.hpp"

using namespace tarnet;
namespace fs = std::filesystem;

namespace {

class Scratch {
 public:
  explicit Scratch(const std::string& tag)
      : path_(fs::temp_directory_path() / ("tarnet_cli_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Scratch() { fs::remove_all(path_); }
  fs::path operator/(const std::string& s) const { return path_ / s; }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.source_sizes = {300};
  c.target_sizes = {50};
  c.replications = 2;
  c.source_train.epochs = 8;
  c.target_train.epochs = 8;
  c.transfer.phase1.epochs = 5;
  c.transfer.phase2.epochs = 5;
  c.transfer.source_reference_size = 100;
  return c;
}

fs::path write_config(const Scratch& dir, const ExperimentConfig& c, const std::string& name = "cfg.json") {
  const fs::path p = dir / name;
  write_file_atomic(p, config_to_json(c).dump(2));
  return p;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "tltarnet");
  return run_cli(args);
}

std::size_t line_count(const fs::path& p) {
  const std::string s = read_file(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::vector<fs::path> files_under(const fs::path& dir, const std::string& ext) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) out.push_back(fs::relative(e.path(), dir));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  const ExperimentConfig d;
  const auto j = config_to_json(d);
  EXPECT_EQ(config_to_json(config_from_json(j)), j);
  const auto t = config_to_json(tiny());
  EXPECT_EQ(config_to_json(config_from_json(t)), t);
  EXPECT_EQ(config_hash(config_from_json(t)), config_hash(tiny()));
}

TEST(Config, PartialFileKeepsDefaults) {
  const ExperimentConfig c = config_from_json(nlohmann::json::parse(R"({"replications": 3})"));
  EXPECT_EQ(c.replications, 3u);
  EXPECT_EQ(c.source_sizes, ExperimentConfig{}.source_sizes);
  EXPECT_EQ(c.transfer.phase1.epochs, ExperimentConfig{}.transfer.phase1.epochs);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"replicatons": 3})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"transfer": {"phase3": {}}})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"replications": -1})")), ConfigError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"sampling": ["stratified"]})")), ConfigError);
  ExperimentConfig c = tiny();
  c.target_sizes = {500};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, HashTracksResultsOnly) {
  ExperimentConfig a = tiny();
  ExperimentConfig b = a;
  b.workers = 4;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.master_seed += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Config, SeedsAndCells) {
  const ExperimentConfig d;
  EXPECT_TRUE(cell_excluded(d, 1000, 500));
  EXPECT_FALSE(cell_excluded(d, 5000, 500));
  const auto u0 = unit_seeds(1, 5000, 0), u1 = unit_seeds(1, 5000, 1);
  EXPECT_NE(u0.source_data, u1.source_data);
  EXPECT_NE(u0.source_data, u0.source_train);
  const auto c0 = cell_seeds(1, 5000, 0, 50, Origin::target_random);
  const auto c1 = cell_seeds(1, 5000, 0, 50, Origin::target_biased);
  EXPECT_NE(c0.target_data, c1.target_data);
  EXPECT_EQ(c0.transfer, cell_seeds(1, 5000, 0, 50, Origin::target_random).transfer);
  EXPECT_EQ(source_spec(d).input_dim, d.dgp.d);
  for (std::size_t nt : d.target_sizes) EXPECT_NO_THROW(target_spec_for(d, nt));
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli({}), kExitUsage);
  EXPECT_EQ(cli({"frobnicate"}), kExitUsage);
  EXPECT_EQ(cli({"simulate", "--out", "/tmp/x"}), kExitUsage);
  EXPECT_EQ(cli({"simulate", "--config", "/nonexistent.json", "--out", "/tmp/x"}), kExitData);
  const Scratch dir("usage");
  write_file_atomic(dir / "c.json", R"({"replications": 0})");
  EXPECT_EQ(cli({"simulate", "--config", (dir / "c.json").string(), "--out", (dir / "o").string()}), kExitUsage);
  write_file_atomic(dir / "d.json", "{not json");
  EXPECT_EQ(cli({"simulate", "--config", (dir / "d.json").string(), "--out", (dir / "o").string()}), kExitUsage);
  EXPECT_EQ(cli({"--help"}), kExitOk);
}

TEST(Cli, SimulateIsReproducible) {
  const Scratch dir("sim");
  const auto cfg = write_config(dir, tiny());
  ASSERT_EQ(cli({"simulate", "--config", cfg.string(), "--out", (dir / "a").string()}), kExitOk);
  ASSERT_EQ(cli({"simulate", "--config", cfg.string(), "--out", (dir / "b").string()}), kExitOk);
  const auto files = files_under(dir / "a", ".csv");
  EXPECT_EQ(files, files_under(dir / "b", ".csv"));
  std::size_t sources = 0, targets = 0;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    sources += name.rfind("source_", 0) == 0;
    targets += name.rfind("target_", 0) == 0;
    EXPECT_EQ(read_file(dir / "a" / f.string()), read_file(dir / "b" / f.string())) << f;
    EXPECT_TRUE(fs::exists(dir / "a" / (f.string() + ".meta.json")));
  }
  EXPECT_EQ(sources, 2u);
  EXPECT_EQ(targets, 4u);
  EXPECT_EQ(line_count(dir / "a" / files.front().string()), 301u);  // sources sort first
  // The manifest carries the config it was made from.
  EXPECT_EQ(config_hash(load_config(dir / "a" / "manifest.json")), config_hash(tiny()));
}

TEST(Cli, SimulateHonoursExclusion) {
  const Scratch dir("excl");
  ExperimentConfig c = tiny();
  c.source_sizes = {1000};
  c.target_sizes = {50, 500};
  c.replications = 1;
  c.sampling = {Origin::target_random};
  const auto out = run_simulate(c, dir / "run");
  EXPECT_EQ(out.source_files.size(), 1u);
  EXPECT_EQ(out.target_files.size(), 1u);
  c.exclude_small_source_large_target = false;
  EXPECT_EQ(run_simulate(c, dir / "run2").target_files.size(), 2u);
}

TEST(Cli, TrainTransferCita) {
  const Scratch dir("ttc");
  ExperimentConfig c = tiny();
  c.replications = 1;
  c.sampling = {Origin::target_biased};
  const auto cfg = write_config(dir, c);
  const auto sim = run_simulate(c, dir / "data");
  const std::string src = sim.source_files.at(0).string();
  const std::string tgt = sim.target_files.at(0).string();

  ASSERT_EQ(cli({"train-source", "--config", cfg.string(), "--data", src, "--out", (dir / "m").string(),
                 "--standardize"}),
            kExitOk);
  EXPECT_EQ(line_count(dir / "m" / "history.csv"), 1u + c.source_train.epochs);
  EXPECT_TRUE(fs::exists(dir / "m" / "transform.json"));

  ASSERT_EQ(cli({"transfer", "--config", cfg.string(), "--model", (dir / "m" / "model.json").string(),
                 "--source-data", src, "--target", tgt, "--transform",
                 (dir / "m" / "transform.json").string(), "--out", (dir / "t").string()}),
            kExitOk);
  for (const char* f : {"model.json", "transfer_report.json", "phase1_trace.csv", "phase2_history.csv"}) {
    EXPECT_TRUE(fs::exists(dir / "t" / f)) << f;
  }
  EXPECT_EQ(line_count(dir / "t" / "phase1_trace.csv"), 1u + c.transfer.phase1.epochs);

  const auto scores = dir / "cita.csv";
  ASSERT_EQ(cli({"cita", "--model", (dir / "m" / "model.json").string(), "--source-data", src, "--target",
                 tgt, tgt, "--transform", (dir / "m" / "transform.json").string(), "--out", scores.string()}),
            kExitOk);
  const std::string csv = read_file(scores);
  EXPECT_EQ(csv.rfind("source_checkpoint,target_file,raw,normalized,permutation,n_source,n_target\n", 0), 0u);
  EXPECT_EQ(line_count(scores), 3u);
}

TEST(Cli, TrainSourceZeroEpochs) {
  const Scratch dir("zero");
  ExperimentConfig c = tiny();
  c.source_train.epochs = 0;
  const auto cfg = write_config(dir, c);
  const auto sim = run_simulate(c, dir / "data");
  ASSERT_EQ(cli({"train-source", "--config", cfg.string(), "--data", sim.source_files.at(0).string(), "--out",
                 (dir / "m").string()}),
            kExitOk);
  EXPECT_EQ(line_count(dir / "m" / "history.csv"), 1u);
}

TEST(Cli, DataErrorsExitTwo) {
  const Scratch dir("bad");
  write_file_atomic(dir / "bad.csv", "x,t,y\n1,5,2\n");
  EXPECT_EQ(cli({"train-source", "--data", (dir / "bad.csv").string(), "--out", (dir / "m").string()}),
            kExitData);
  EXPECT_EQ(cli({"train-source", "--data", (dir / "missing.csv").string(), "--out", (dir / "m").string()}),
            kExitData);
  EXPECT_EQ(cli({"evaluate", "--run", dir.path().string()}), kExitData);
  EXPECT_THROW(run_evaluate(dir.path()), DataError);
}

TEST(Study, UnitIsDeterministicAndBaselineBlind) {
  const ExperimentConfig c = tiny();
  const UnitResult a = run_unit(c, 300, 0);
  const UnitResult b = run_unit(c, 300, 0);
  ASSERT_EQ(a.cells.size(), 2u);
  for (std::size_t k = 0; k < a.cells.size(); ++k) {
    EXPECT_EQ(a.cells[k].baseline_source_reads, 0u);
    EXPECT_EQ(a.cells[k].tl_tarnet.pehe, b.cells[k].tl_tarnet.pehe);
    EXPECT_EQ(a.cells[k].tarnet.mean_ite, b.cells[k].tarnet.mean_ite);
    ASSERT_TRUE(a.cells[k].cita);
    EXPECT_EQ(a.cells[k].cita->normalized, b.cells[k].cita->normalized);
    EXPECT_GE(a.cells[k].cita->normalized, 0.0);
  }
}

TEST(Study, ResumeMatchesUninterruptedRun) {
  const Scratch dir("resume");
  const ExperimentConfig c = tiny();
  const auto full = run_full_study(c, dir / "full", {});
  ASSERT_TRUE(full.complete);
  EXPECT_EQ(full.computed, 2u);

  StudyOptions stop;
  stop.stop_after = 1;
  const auto part = run_full_study(c, dir / "part", stop);
  EXPECT_FALSE(part.complete);
  EXPECT_FALSE(fs::exists(dir / "part" / "summary.csv"));
  EXPECT_THROW(run_evaluate(dir / "part"), DataError);

  StudyOptions resume;
  resume.resume = true;
  const auto rest = run_full_study(c, dir / "part", resume);
  EXPECT_TRUE(rest.complete);
  EXPECT_EQ(rest.reused, 1u);
  EXPECT_EQ(rest.computed, 1u);
  EXPECT_EQ(read_file(dir / "part" / "summary.csv"), read_file(dir / "full" / "summary.csv"));

  // Re-evaluating is idempotent; a different config cannot resume.
  const auto ev = run_evaluate(dir / "full");
  EXPECT_EQ(ev.results.size(), 2u * 2u * 2u);
  EXPECT_EQ(summary_to_csv(ev.summaries), read_file(dir / "full" / "summary.csv"));
  ExperimentConfig other = c;
  other.master_seed += 1;
  EXPECT_THROW(run_full_study(other, dir / "full", resume), ConfigError);
}

TEST(Study, ManifestReplaysTheRun) {
  const Scratch dir("replay");
  ExperimentConfig c = tiny();
  c.replications = 1;
  const auto cfg = write_config(dir, c);
  ASSERT_EQ(cli({"full-study", "--config", cfg.string(), "--out", (dir / "a").string()}), kExitOk);
  ASSERT_EQ(cli({"full-study", "--config", (dir / "a" / "manifest.json").string(), "--out",
                 (dir / "b").string()}),
            kExitOk);
  EXPECT_EQ(read_file(dir / "a" / "summary.csv"), read_file(dir / "b" / "summary.csv"));
  EXPECT_EQ(cli({"evaluate", "--run", (dir / "b").string()}), kExitOk);
}
