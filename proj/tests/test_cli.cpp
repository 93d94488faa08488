// End-to-end tests of the maskset binary; the build passes its location in
// the MASKSET_CLI_PATH macro.

#include <cstdlib>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "maskset/configfile.hpp"
#include "maskset/corpus.hpp"
#include "test_support.hpp"

#ifndef MASKSET_CLI_PATH
#error "MASKSET_CLI_PATH must point at the maskset binary"
#endif

using testsupport::Scratch;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code;
  std::string out;  // stdout + stderr
};

RunResult run_cli(const Scratch& scratch, const std::string& args,
                  const std::string& env = "") {
  const std::string log = scratch.str("cli_log.txt");
  const std::string cmd = (env.empty() ? "" : env + " ") +
                          std::string(MASKSET_CLI_PATH) + " " + args + " > " +
                          log + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testsupport::read_file(log);
  return r;
}

// One small corpus shared by the pipeline tests below.
void make_corpus(const Scratch& scratch) {
  testsupport::write_file(scratch.path("synth.cfg"),
                          "synth.n_classes = 6\n"
                          "synth.n_clips = 320\n"
                          "synth.feature_dim = 6\n"
                          "synth.patches_per_clip = 2\n"
                          "synth.labels_min = 1\n"
                          "synth.labels_max = 2\n"
                          "synth.seed = 71\n");
  const RunResult r = run_cli(scratch, "synth --config " + scratch.str("synth.cfg") +
                                           " --out " + scratch.str("corpus"));
  REQUIRE(r.exit_code == 0);
}

}  // namespace

TEST_CASE("cli usage surface") {
  Scratch scratch("cliusage");
  SUBCASE("--help exits zero and lists subcommands") {
    const RunResult r = run_cli(scratch, "--help");
    CHECK(r.exit_code == 0);
    for (const char* sub : {"synth", "train", "score", "enhance", "eval",
                            "sweep", "audit", "report"})
      CHECK(r.out.find(sub) != std::string::npos);
  }
  SUBCASE("subcommand --help exits zero") {
    CHECK(run_cli(scratch, "train --help").exit_code == 0);
  }
  SUBCASE("unknown subcommand exits 2") {
    CHECK(run_cli(scratch, "warble").exit_code == 2);
  }
  SUBCASE("no subcommand exits 2") {
    CHECK(run_cli(scratch, "").exit_code == 2);
  }
  SUBCASE("unknown flag exits 2") {
    CHECK(run_cli(scratch, "synth --frobnicate 3").exit_code == 2);
  }
  SUBCASE("missing required flag exits 2") {
    CHECK(run_cli(scratch, "train").exit_code == 2);
  }
  SUBCASE("bad config file exits 2") {
    testsupport::write_file(scratch.path("bad.cfg"), "nonsense\n");
    const RunResult r = run_cli(scratch, "synth --config " +
                                             scratch.str("bad.cfg") + " --out " +
                                             scratch.str("c"));
    CHECK(r.exit_code == 2);
  }
  SUBCASE("unknown config key exits 2") {
    testsupport::write_file(scratch.path("typo.cfg"), "synth.typo = 1\n");
    CHECK(run_cli(scratch, "synth --config " + scratch.str("typo.cfg") +
                               " --out " + scratch.str("c"))
              .exit_code == 2);
  }
  SUBCASE("unknown config section exits 2") {
    testsupport::write_file(scratch.path("sect.cfg"), "paths.out = /x\n");
    CHECK(run_cli(scratch, "synth --config " + scratch.str("sect.cfg") +
                               " --out " + scratch.str("c"))
              .exit_code == 2);
  }
  SUBCASE("missing corpus is a runtime error, exit 1") {
    CHECK(run_cli(scratch, "train --corpus " + scratch.str("nope") +
                               " --out " + scratch.str("m.mpm"))
              .exit_code == 1);
  }
}

TEST_CASE("cli synth is reproducible and echoes its config") {
  Scratch scratch("clisynth");
  make_corpus(scratch);
  for (const char* name :
       {"features_train.bin", "features_eval.bin", "labels.csv", "truth.csv",
        "injections.csv", "priors.csv", "synth_resolved.cfg"})
    CHECK(fs::exists(scratch.path("corpus") / name));

  SUBCASE("the resolved config reparses and pins the seed") {
    const maskset::ConfigFile cfg = maskset::ConfigFile::parse_file(
        scratch.str("corpus") + "/synth_resolved.cfg");
    CHECK(cfg.get_uint("synth.seed", 0) == 71);
    CHECK(cfg.get_uint("synth.n_clips", 0) == 320);
  }
  SUBCASE("rerunning into a fresh directory is byte identical") {
    const RunResult r =
        run_cli(scratch, "synth --config " + scratch.str("synth.cfg") +
                             " --out " + scratch.str("corpus2"));
    REQUIRE(r.exit_code == 0);
    for (const char* name : {"features_train.bin", "labels.csv", "truth.csv",
                             "injections.csv", "priors.csv"})
      CHECK(testsupport::read_file(scratch.path("corpus") / name) ==
            testsupport::read_file(scratch.path("corpus2") / name));
  }
  SUBCASE("--seed overrides the config") {
    const RunResult r =
        run_cli(scratch, "synth --config " + scratch.str("synth.cfg") +
                             " --seed 72 --out " + scratch.str("corpus72"));
    REQUIRE(r.exit_code == 0);
    CHECK(testsupport::read_file(scratch.path("corpus72/labels.csv")) !=
          testsupport::read_file(scratch.path("corpus/labels.csv")));
  }
}

TEST_CASE("cli pipeline round trip") {
  Scratch scratch("clipipe");
  make_corpus(scratch);
  const std::string corpus = scratch.str("corpus");
  testsupport::write_file(scratch.path("train.cfg"), "train.epochs = 3\n");

  // teacher run directory: checkpoint, sidecar, resolved config
  REQUIRE(run_cli(scratch, "train --corpus " + corpus + " --config " +
                               scratch.str("train.cfg") + " --seed 1 --out " +
                               scratch.str("teacher"))
              .exit_code == 0);
  const std::string teacher = scratch.str("teacher") + "/model.mpm";
  CHECK(fs::exists(teacher));
  CHECK(fs::exists(teacher + ".txt"));
  CHECK(fs::exists(scratch.path("teacher/train_resolved.cfg")));

  // teacher scores on the train split
  REQUIRE(run_cli(scratch, "score --corpus " + corpus + " --model " + teacher +
                               " --split train --out " +
                               scratch.str("scores.csv"))
              .exit_code == 0);

  // enhanced labels at 2%
  REQUIRE(run_cli(scratch, "enhance --corpus " + corpus + " --scores " +
                               scratch.str("scores.csv") +
                               " --fraction 2 --out " +
                               scratch.str("enhanced.csv"))
              .exit_code == 0);

  SUBCASE("fraction 0 reproduces the original label file") {
    REQUIRE(run_cli(scratch, "enhance --corpus " + corpus + " --scores " +
                                 scratch.str("scores.csv") +
                                 " --fraction 0 --out " +
                                 scratch.str("enhanced0.csv"))
                .exit_code == 0);
    CHECK(testsupport::read_file(scratch.path("enhanced0.csv")) ==
          testsupport::read_file(scratch.path("corpus/labels.csv")));
  }
  SUBCASE("nonzero fraction marks cells ignored") {
    const std::string text =
        testsupport::read_file(scratch.path("enhanced.csv"));
    CHECK(text.find(",IG") != std::string::npos);
  }
  SUBCASE("student training accepts the enhanced mask") {
    REQUIRE(run_cli(scratch, "train --corpus " + corpus + " --config " +
                                 scratch.str("train.cfg") +
                                 " --seed 1 --mask " +
                                 scratch.str("enhanced.csv") + " --out " +
                                 scratch.str("student"))
                .exit_code == 0);
    const std::string student = scratch.str("student") + "/model.mpm";
    // the mask changes the optimization
    CHECK(testsupport::read_file(student) != testsupport::read_file(teacher));

    // eval writes a per-class report plus a key=value summary
    REQUIRE(run_cli(scratch, "eval --corpus " + corpus + " --model " +
                                 student + " --out " + scratch.str("eval.csv"))
                .exit_code == 0);
    const std::string report =
        testsupport::read_file(scratch.path("eval.csv"));
    CHECK(report.find("class_id,n_pos,n_neg_explicit,dprime,lwlrap") == 0);
    CHECK(report.find("macro,") != std::string::npos);
    CHECK(testsupport::read_file(scratch.path("eval.summary.txt"))
              .find("macro_lwlrap = ") != std::string::npos);
  }
  SUBCASE("audit ranks flagged cells with provenance") {
    REQUIRE(run_cli(scratch, "audit --corpus " + corpus + " --enhanced " +
                                 scratch.str("enhanced.csv") + " --scores " +
                                 scratch.str("scores.csv") +
                                 " --top-k 5 --out " + scratch.str("audit.csv"))
                .exit_code == 0);
    const std::string audit =
        testsupport::read_file(scratch.path("audit.csv"));
    CHECK(audit.find("class_id,clip_id,score,was_injected") == 0);
    // synthetic corpora carry the injection log, so provenance is 0/1
    CHECK(audit.find("NA") == std::string::npos);
  }
}

TEST_CASE("cli sweep and report") {
  Scratch scratch("clisweep");
  make_corpus(scratch);
  const std::string corpus = scratch.str("corpus");
  testsupport::write_file(scratch.path("sweep.cfg"),
                          "train.epochs = 3\n"
                          "sweep.grid = 0,1,5\n"
                          "sweep.seeds = 1,2\n");
  const RunResult first =
      run_cli(scratch, "sweep --corpus " + corpus + " --config " +
                           scratch.str("sweep.cfg") + " --out " +
                           scratch.str("results"));
  REQUIRE(first.exit_code == 0);

  std::size_t done = 0;
  for (const char* frac : {"f0", "f1", "f5"})
    for (const char* seed : {"seed1", "seed2"})
      done += fs::exists(scratch.path("results") / "large" / "linear" / frac /
                         seed / "done");
  CHECK(done == 6);
  CHECK(fs::exists(scratch.path("results/summary.csv")));
  CHECK(fs::exists(scratch.path("results/curves/large_linear.csv")));
  CHECK(fs::exists(scratch.path("results/curves/large_linear.svg")));
  CHECK(first.out.find("best") != std::string::npos);

  SUBCASE("summary has one row per (size, capacity, fraction, seed)") {
    const std::string summary =
        testsupport::read_file(scratch.path("results/summary.csv"));
    CHECK(summary.find(
              "size,capacity,fraction_percent,seed,macro_dprime,"
              "macro_lwlrap\n") == 0);
    std::size_t rows = 0;
    for (char ch : summary) rows += ch == '\n';
    CHECK(rows == 7);  // header + three fractions x two seeds
  }
  SUBCASE("rerun resumes idempotently") {
    const std::string before =
        testsupport::read_file(scratch.path("results/summary.csv"));
    const RunResult again =
        run_cli(scratch, "sweep --corpus " + corpus + " --config " +
                             scratch.str("sweep.cfg") + " --out " +
                             scratch.str("results"));
    CHECK(again.exit_code == 0);
    CHECK(again.out.find("trained 0 models") != std::string::npos);
    CHECK(testsupport::read_file(scratch.path("results/summary.csv")) ==
          before);
  }
  SUBCASE("report reads the results tree") {
    const RunResult r =
        run_cli(scratch, "report --corpus " + corpus + " --results " +
                             scratch.str("results") + " --out " +
                             scratch.str("prior_groups.csv"));
    CHECK(r.exit_code == 0);
    const std::string groups =
        testsupport::read_file(scratch.path("prior_groups.csv"));
    CHECK(groups.find("group,n_classes,") == 0);
    CHECK(r.out.find("best operating point") != std::string::npos);
  }
  SUBCASE("MASKSET_RESULTS_DIR supplies the default output root") {
    const RunResult r = run_cli(
        scratch,
        "sweep --corpus " + corpus + " --config " + scratch.str("sweep.cfg"),
        "MASKSET_RESULTS_DIR=" + scratch.str("envresults"));
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(scratch.path("envresults/summary.csv")));
  }
  SUBCASE("--grid and --seeds override the config") {
    const RunResult r =
        run_cli(scratch, "sweep --corpus " + corpus + " --config " +
                             scratch.str("sweep.cfg") +
                             " --grid 0,3 --seeds 4 --out " +
                             scratch.str("override"));
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(scratch.path("override/large/linear/f3/seed4/done")));
    CHECK(!fs::exists(scratch.path("override/large/linear/f1")));
  }
}
