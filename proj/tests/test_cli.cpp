#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vdst/cli/run.hpp"
#include "vdst/io/artifact.hpp"

namespace fs = std::filesystem;

namespace {

using vdst::InvalidConfig;
using vdst::io::Config;

fs::path fresh_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / "vdst_cli_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Baseline toy run settings shared by the command tests.
Config toy_config(const fs::path& out) {
  Config cfg;
  cfg.set("run.seed", "11");
  cfg.set("run.out", out.string());
  cfg.set("dataset.kind", "moving_shapes");
  cfg.set("dataset.appearances", "2");
  cfg.set("dataset.directions", "1");
  cfg.set("dataset.canvas", "12");
  cfg.set("dataset.channels", "1");
  cfg.set("dataset.frames", "4");
  cfg.set("dataset.clips_per_class", "4");
  cfg.set("dataset.shape_size", "4");
  cfg.set("dataset.speed", "1");
  cfg.set("dataset.noise_std", "0.02");
  cfg.set("schedule.n_syn", "2");
  cfg.set("schedule.n_real", "2");
  cfg.set("schedule.k", "1");
  cfg.set("schedule.interp", "duplicate");
  cfg.set("schedule.l_syn", "0");  // resolve to clip length
  cfg.set("match.objective", "distribution_dm");
  cfg.set("match.arch", "convnet_2d");
  cfg.set("match.widths", "2,2,2,2");
  cfg.set("match.ipc", "1");
  cfg.set("match.iterations", "3");
  cfg.set("match.batch_real", "2");
  cfg.set("eval.arch", "convnet_2d");
  cfg.set("eval.widths", "2,2,2,2");
  cfg.set("eval.epochs", "2");
  cfg.set("eval.lr", "0.01");
  cfg.set("eval.num_seeds", "1");
  return cfg;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(in, l)) lines.push_back(l);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace

TEST_CASE("cli: command names map to the six subcommands") {
  using vdst::cli::Command;
  CHECK(vdst::cli::command_from_name("distill") == Command::distill);
  CHECK(vdst::cli::command_from_name("distill-disentangled") ==
        Command::distill_disentangled);
  CHECK(vdst::cli::command_from_name("evaluate") == Command::evaluate);
  CHECK(vdst::cli::command_from_name("sweep") == Command::sweep);
  CHECK(vdst::cli::command_from_name("coreset") == Command::coreset);
  CHECK(vdst::cli::command_from_name("inspect") == Command::inspect);
  CHECK_THROWS_AS(vdst::cli::command_from_name("bogus"), InvalidConfig);
}

TEST_CASE("cli: distill emits a loadable artifact and a loss sheet") {
  const auto out = fresh_dir("distill");
  auto cfg = toy_config(out);
  const int code = vdst::cli::run(vdst::cli::Command::distill, cfg);
  CHECK(code == vdst::cli::kExitOk);

  auto set = vdst::io::load_synthetic_set<double>(
      (out / "synthetic.vdst").string());
  CHECK(set.items() == 2);
  CHECK(set.num_classes == 2);
  CHECK(set.schedule.n_syn == 2);
  CHECK(set.schedule.l_syn == 4);  // resolved from the corpus clip length

  auto lines = read_lines(out / "distill_loss.csv");
  REQUIRE(lines.size() == 4);  // header + one row per iteration
  CHECK(lines[0] == "iteration,loss,config_fingerprint");
  auto cells = split_csv(lines[1]);
  REQUIRE(cells.size() == 3);
  CHECK(cells[0] == "0");
  CHECK(std::isfinite(std::stod(cells[1])));
  CHECK(cells[2] == cfg.fingerprint());
}

TEST_CASE("cli: a budget below the artifact size aborts with the budget "
          "exit code") {
  const auto out = fresh_dir("distill_budget");
  auto cfg = toy_config(out);
  cfg.set("run.budget_bytes", "64");
  const int code = vdst::cli::run(vdst::cli::Command::distill, cfg);
  CHECK(code == vdst::cli::kExitBudget);
  CHECK(!fs::exists(out / "synthetic.vdst"));
  auto lines = read_lines(out / "error.txt");
  REQUIRE(!lines.empty());
  CHECK(lines[0].find("vdst-error") == 0);
  CHECK(lines[0].find("kind=BudgetExceeded") != std::string::npos);
}

TEST_CASE("cli: distill-disentangled emits a two-memory artifact") {
  const auto out = fresh_dir("disentangled");
  auto cfg = toy_config(out);
  cfg.set("match.objective", "gradient_dc");
  cfg.set("stage.spc", "1");
  cfg.set("stage.dpc", "1");
  cfg.set("stage.stage1_iterations", "2");
  cfg.set("match.iterations", "2");
  const int code =
      vdst::cli::run(vdst::cli::Command::distill_disentangled, cfg);
  CHECK(code == vdst::cli::kExitOk);

  auto art = vdst::io::load_distilled_artifact<double>(
      (out / "artifact.vdst").string());
  CHECK(art.static_memory.images.dim(0) == 2);
  CHECK(art.dynamic_memory.motions.dim(0) == 2);
  CHECK(art.dataset_name == "moving_shapes");
  CHECK(fs::exists(out / "stage1_loss.csv"));
  CHECK(fs::exists(out / "stage2_loss.csv"));

  // Same command under an impossible budget: budget exit, nothing written.
  const auto out2 = fresh_dir("disentangled_budget");
  auto cfg2 = toy_config(out2);
  cfg2.set("match.objective", "gradient_dc");
  cfg2.set("stage.stage1_iterations", "1");
  cfg2.set("match.iterations", "1");
  cfg2.set("run.budget_bytes", "100");
  CHECK(vdst::cli::run(vdst::cli::Command::distill_disentangled, cfg2) ==
        vdst::cli::kExitBudget);
  CHECK(!fs::exists(out2 / "artifact.vdst"));
}

TEST_CASE("cli: evaluate scores a saved artifact against a held-out corpus") {
  const auto out = fresh_dir("evaluate");
  auto cfg = toy_config(out);
  REQUIRE(vdst::cli::run(vdst::cli::Command::distill, cfg) == 0);

  cfg.set("evaluate.artifact", (out / "synthetic.vdst").string());
  const int code = vdst::cli::run(vdst::cli::Command::evaluate, cfg);
  CHECK(code == vdst::cli::kExitOk);

  auto summary = read_lines(out / "eval_summary.csv");
  REQUIRE(summary.size() == 2);
  CHECK(summary[0] ==
        "accuracy_mean,accuracy_std,arch,epochs,lr,config_fingerprint");
  auto cells = split_csv(summary[1]);
  const double mean = std::stod(cells[0]);
  CHECK(mean >= 0.0);
  CHECK(mean <= 1.0);
  CHECK(cells[2] == "convnet_2d");

  auto seeds = read_lines(out / "eval_seeds.csv");
  REQUIRE(seeds.size() == 2);  // header + one seed
  CHECK(seeds[0] == "seed,accuracy,config_fingerprint");
  CHECK(fs::exists(out / "eval_report.txt"));
}

TEST_CASE("cli: coreset packages real clips") {
  const auto out = fresh_dir("coreset");
  auto cfg = toy_config(out);
  cfg.set("coreset.ipc", "1");
  cfg.set("coreset.method", "random");
  const int code = vdst::cli::run(vdst::cli::Command::coreset, cfg);
  CHECK(code == vdst::cli::kExitOk);
  auto set =
      vdst::io::load_synthetic_set<double>((out / "coreset.vdst").string());
  CHECK(set.items() == 2);
  CHECK((set.labels == std::vector<int>{0, 1}));
  CHECK(set.frames.dim(1) == 4);  // full-length clips kept
}

TEST_CASE("cli: inspect reports storage and renders difference grids") {
  const auto out = fresh_dir("inspect");
  auto cfg = toy_config(out);
  REQUIRE(vdst::cli::run(vdst::cli::Command::distill, cfg) == 0);

  cfg.set("inspect.artifact", (out / "synthetic.vdst").string());
  const int code = vdst::cli::run(vdst::cli::Command::inspect, cfg);
  CHECK(code == vdst::cli::kExitOk);
  auto lines = read_lines(out / "inspect.txt");
  REQUIRE(!lines.empty());
  CHECK(lines[0].find("bytes") != std::string::npos);
  // One grid per class for a 2-class synthetic set.
  CHECK(fs::exists(out / "diff_class0.pgm"));
  CHECK(fs::exists(out / "diff_class1.pgm"));
}

TEST_CASE("cli: inspect on an empty artifact reports zero bytes") {
  const auto out = fresh_dir("inspect_empty");
  const auto path = out / "empty.vdst";
  vdst::io::Config meta;
  meta.set("kind", "synthetic_set");
  vdst::io::detail::write_artifact_file(path.string(), meta, "", 0);

  auto cfg = toy_config(out);
  cfg.set("inspect.artifact", path.string());
  const int code = vdst::cli::run(vdst::cli::Command::inspect, cfg);
  CHECK(code == vdst::cli::kExitOk);
  auto lines = read_lines(out / "inspect.txt");
  REQUIRE(!lines.empty());
  CHECK(lines[0].find("0 bytes") != std::string::npos);
}

TEST_CASE("cli: sweep writes the grid sheet and the interpolator "
          "comparison") {
  const auto out = fresh_dir("sweep");
  auto cfg = toy_config(out);
  cfg.set("sweep.n_syn", "1,2");
  cfg.set("sweep.n_real", "1,2");
  cfg.set("sweep.k", "1");
  cfg.set("match.iterations", "2");
  cfg.set("eval.epochs", "1");
  cfg.set("interp.iterations", "4");
  const int code = vdst::cli::run(vdst::cli::Command::sweep, cfg);
  CHECK(code == vdst::cli::kExitOk);

  auto lines = read_lines(out / "sweep.csv");
  REQUIRE(lines.size() == 5);  // header + 2x2 grid
  CHECK(lines[0] ==
        "n_syn,n_real,k,interp,accuracy_mean,accuracy_std,peak_bytes,"
        "wall_ms,config_fingerprint");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto cells = split_csv(lines[i]);
    REQUIRE(cells.size() == 9);
    CHECK(std::stoll(cells[6]) > 0);         // peak bytes measured
    CHECK(std::stod(cells[7]) >= 0.0);       // wall time measured
    const double acc = std::stod(cells[4]);
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  // Per-cell artifacts in isolated subdirectories.
  CHECK(fs::exists(out / "cell_s1_r1_k1" / "synthetic.vdst"));
  CHECK(fs::exists(out / "cell_s2_r2_k1" / "synthetic.vdst"));

  auto interp = read_lines(out / "interp_compare.csv");
  REQUIRE(interp.size() == 4);  // header + duplicate, linear, parametric
  CHECK(interp[0] == "interp,reconstruction_mse,config_fingerprint");
  CHECK(split_csv(interp[1])[0] == "duplicate");
  CHECK(split_csv(interp[2])[0] == "linear");
  CHECK(split_csv(interp[3])[0] == "parametric");
  for (std::size_t i = 1; i < interp.size(); ++i)
    CHECK(std::stod(split_csv(interp[i])[1]) >= 0.0);
}

TEST_CASE("cli: module errors exit 1 with a machine-readable record") {
  const auto out = fresh_dir("bad_schedule");
  auto cfg = toy_config(out);
  cfg.set("schedule.k", "3");  // does not divide n_syn=2
  const int code = vdst::cli::run(vdst::cli::Command::distill, cfg);
  CHECK(code == vdst::cli::kExitError);
  auto lines = read_lines(out / "error.txt");
  REQUIRE(!lines.empty());
  CHECK(lines[0].find("vdst-error") == 0);
  CHECK(lines[0].find("kind=InvalidConfig") != std::string::npos);

  // Unknown keys are caught before any work happens.
  const auto out2 = fresh_dir("bad_key");
  auto cfg2 = toy_config(out2);
  cfg2.set("match.iteratoins", "5");
  CHECK(vdst::cli::run(vdst::cli::Command::distill, cfg2) ==
        vdst::cli::kExitError);
  auto lines2 = read_lines(out2 / "error.txt");
  CHECK(lines2[0].find("kind=InvalidConfig") != std::string::npos);
  CHECK(lines2[0].find("iteratoins") != std::string::npos);
}
