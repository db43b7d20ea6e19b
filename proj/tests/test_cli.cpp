#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#ifndef MIXER_CLI_PATH
#error "MIXER_CLI_PATH must point at the mixer binary"
#endif

#ifdef _WIN32
#define EXIT_OF(rc) (rc)
#else
#include <sys/wait.h>
#define EXIT_OF(rc) (WIFEXITED(rc) ? WEXITSTATUS(rc) : -1)
#endif

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int count_lines(const std::string& text) {
  int n = 0;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ++n;
  return n;
}

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "mixer_cli_scratch";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunResult run(const std::string& args) {
  static int invocation = 0;
  const fs::path out = scratch_root() / ("stdout." + std::to_string(
                                             invocation));
  const fs::path err = scratch_root() / ("stderr." + std::to_string(
                                             invocation));
  ++invocation;
  const std::string cmd = std::string(MIXER_CLI_PATH) + " " + args + " > " +
                          out.string() + " 2> " + err.string();
  const int rc = std::system(cmd.c_str());
  RunResult r;
  r.code = EXIT_OF(rc);
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::binary);
  os << content;
}

const char* kGenConfig = R"({
  "gen": {
    "num_ids": 4, "k_s": 3, "k_m": 2, "input_dim": 16,
    "cams_v": 2, "cams_i": 2, "samples_per_id_per_cam": 2,
    "noise_sigma": 0.05, "seed": 3
  }
})";

const char* kTrainConfig = R"({
  "model": { "hidden_dims": [16], "d_e": 4, "d_r": 4 },
  "train": {
    "epochs": 2, "base_lr": 0.001, "warmup_epochs": 1, "decay_epochs": [],
    "p_ids": 2, "k_per_modality": 2, "seed": 5
  }
})";

// generates a dataset once and shares it across the training tests
fs::path shared_dataset() {
  static const fs::path dir = [] {
    const fs::path d = fresh_dir("shared_gen");
    write_file(d / "cfg.json", kGenConfig);
    const RunResult r = run("gen --config " + (d / "cfg.json").string() +
                            " --out " + d.string());
    REQUIRE(r.code == 0);
    REQUIRE(fs::exists(d / "dataset.csv"));
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("help exits zero, missing subcommand exits two") {
  CHECK(run("--help").code == 0);
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("gen").code == 2);  // --out is required
}

TEST_CASE("verify: pass lines, CSV artifact, fault injection") {
  const fs::path dir = fresh_dir("verify");
  const RunResult ok = run("verify --out " + dir.string());
  CHECK(ok.code == 0);
  CHECK(count_lines(ok.out) == 14);
  CHECK(ok.out.find("FAIL") == std::string::npos);
  CHECK(ok.out.find("theorem1_xor_gap_ln2") != std::string::npos);

  const std::string csv = slurp(dir / "verify.csv");
  CHECK(count_lines(csv) == 15);  // header + 14 checks
  CHECK(csv.rfind("check,trials,max_violation,pass\n", 0) == 0);

  const RunResult bad =
      run("verify --out " + dir.string() + " --inject-fault");
  CHECK(bad.code == 1);
  CHECK(bad.err.find("injected_fault") != std::string::npos);
}

TEST_CASE("gen: deterministic output, config validation") {
  const fs::path a = fresh_dir("gen_a");
  const fs::path b = fresh_dir("gen_b");
  write_file(a / "cfg.json", kGenConfig);

  CHECK(run("gen --config " + (a / "cfg.json").string() + " --out " +
            a.string())
            .code == 0);
  CHECK(run("gen --config " + (a / "cfg.json").string() + " --out " +
            b.string())
            .code == 0);
  const std::string da = slurp(a / "dataset.csv");
  CHECK(!da.empty());
  CHECK(da == slurp(b / "dataset.csv"));

  // a different seed changes the bytes
  const fs::path c = fresh_dir("gen_c");
  CHECK(run("gen --config " + (a / "cfg.json").string() + " --out " +
            c.string() + " --seed 99")
            .code == 0);
  CHECK(slurp(c / "dataset.csv") != da);

  const fs::path bad = fresh_dir("gen_bad");
  write_file(bad / "neg.json", R"({"gen": {"num_ids": -3}})");
  CHECK(run("gen --config " + (bad / "neg.json").string() + " --out " +
            bad.string())
            .code == 2);
  write_file(bad / "mangled.json", "this is not json");
  CHECK(run("gen --config " + (bad / "mangled.json").string() + " --out " +
            bad.string())
            .code == 2);
  CHECK(run("gen --config " + (bad / "missing.json").string() + " --out " +
            bad.string())
            .code == 2);
}

TEST_CASE("train: artifacts, epoch count, determinism") {
  const fs::path data = shared_dataset();
  const fs::path t1 = fresh_dir("train_1");
  const fs::path t2 = fresh_dir("train_2");
  write_file(t1 / "cfg.json", kTrainConfig);

  const std::string base_args = std::string("train --config ") +
                                (t1 / "cfg.json").string() + " --dataset " +
                                (data / "dataset.csv").string();
  CHECK(run(base_args + " --out " + t1.string()).code == 0);
  CHECK(fs::exists(t1 / "model.ckpt"));
  const std::string hist = slurp(t1 / "history.csv");
  CHECK(count_lines(hist) == 3);  // header + one row per epoch
  CHECK(hist.rfind("epoch,", 0) == 0);

  CHECK(run(base_args + " --out " + t2.string()).code == 0);
  CHECK(slurp(t1 / "model.ckpt") == slurp(t2 / "model.ckpt"));
  CHECK(hist == slurp(t2 / "history.csv"));

  // resume: two more epochs on top of the saved checkpoint
  CHECK(run(base_args + " --out " + t1.string() + " --resume").code == 0);
  CHECK(count_lines(slurp(t1 / "history.csv")) == 3);  // rewritten per run
  CHECK(slurp(t1 / "model.ckpt") != slurp(t2 / "model.ckpt"));

  // resume without a checkpoint is a usage error
  const fs::path t3 = fresh_dir("train_3");
  write_file(t3 / "cfg.json", kTrainConfig);
  CHECK(run("train --config " + (t3 / "cfg.json").string() + " --dataset " +
            (data / "dataset.csv").string() + " --out " + t3.string() +
            " --resume")
            .code == 2);

  // missing dataset is a usage error
  CHECK(run("train --config " + (t3 / "cfg.json").string() + " --dataset " +
            (t3 / "nope.csv").string() + " --out " + t3.string())
            .code == 2);
}

TEST_CASE("eval: report shape, option validation") {
  const fs::path data = shared_dataset();
  const fs::path dir = fresh_dir("eval");
  write_file(dir / "cfg.json", kTrainConfig);
  REQUIRE(run("train --config " + (dir / "cfg.json").string() +
              " --dataset " + (data / "dataset.csv").string() + " --out " +
              dir.string())
              .code == 0);

  const std::string eval_args = std::string("eval --dataset ") +
                                (data / "dataset.csv").string() + " --out " +
                                dir.string();
  CHECK(run(eval_args).code == 0);
  const std::string report = slurp(dir / "report.csv");
  CHECK(report.rfind(
            "setting,embed_mode,query_modality,R1,R5,R10,R20,mAP,mINP,used,"
            "skipped\n",
            0) == 0);
  CHECK(count_lines(report) == 5);  // header + Mix, MixCam, MixCamID, MixID
  CHECK(fs::exists(dir / "dist_hist.csv"));

  // explicit settings list restricts the rows
  CHECK(run(eval_args + " --settings Mix CrossModal").code == 0);
  CHECK(count_lines(slurp(dir / "report.csv")) == 3);

  // single-shot smoke
  CHECK(run(eval_args + " --settings Mix --single-shot 3 --seed 1").code ==
        0);

  const RunResult bogus = run(eval_args + " --settings Bogus");
  CHECK(bogus.code == 2);
  CHECK(bogus.err.find("MixCamID") != std::string::npos);

  CHECK(run(eval_args + " --query-modality X").code == 2);
  CHECK(run(eval_args + " --embed-mode nonsense").code == 2);

  // checkpoint file absent
  const fs::path empty = fresh_dir("eval_empty");
  CHECK(run("eval --dataset " + (data / "dataset.csv").string() + " --out " +
            empty.string())
            .code == 2);
}

TEST_CASE("sweep: per-cell artifacts and aggregate report") {
  const fs::path data = shared_dataset();
  const fs::path dir = fresh_dir("sweep");
  write_file(dir / "cfg.json", kTrainConfig);

  const std::string train_args = std::string("train --config ") +
                                 (dir / "cfg.json").string() + " --dataset " +
                                 (data / "dataset.csv").string() + " --out " +
                                 dir.string();
  CHECK(run(train_args + " --sweep lambda_f=0,0.4").code == 0);
  CHECK(fs::exists(dir / "sweep" / "lambda_f=0" / "model.ckpt"));
  CHECK(fs::exists(dir / "sweep" / "lambda_f=0.4" / "model.ckpt"));
  CHECK(fs::exists(dir / "sweep" / "lambda_f=0" / "history.csv"));

  CHECK(run("eval --dataset " + (data / "dataset.csv").string() + " --out " +
            dir.string() + " --settings Mix MixID --sweep lambda_f=0,0.4")
            .code == 0);
  const std::string agg = slurp(dir / "report.csv");
  CHECK(agg.rfind("variant,setting,embed_mode,query_modality,", 0) == 0);
  CHECK(count_lines(agg) == 5);  // header + 2 variants x 2 settings
  CHECK(agg.find("lambda_f=0,") != std::string::npos);
  CHECK(agg.find("lambda_f=0.4,") != std::string::npos);
  CHECK(fs::exists(dir / "sweep" / "lambda_f=0.4" / "report.csv"));

  // sweep on an unknown parameter or with resume is rejected
  CHECK(run(train_args + " --sweep epochs=1,2").code == 2);
  CHECK(run(train_args + " --resume --sweep lambda_f=0,0.4").code == 2);
}
