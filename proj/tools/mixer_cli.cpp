// mixer: batch pipeline driver. Subcommands: gen, train, eval, verify.
// Exit codes: 0 ok, 1 verification failure, 2 usage/config error,
// 3 numerical failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mixer/error.hpp"
#include "mixer/evalharness.hpp"
#include "mixer/miprobe.hpp"
#include "mixer/model.hpp"
#include "mixer/synthgen.hpp"
#include "mixer/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw mixer::ConfigError("cannot open config file " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw mixer::ConfigError("config file " + path + ": " + e.what());
  }
}

json section(const json& root, const char* name) {
  if (!root.contains(name)) return json::object();
  if (!root.at(name).is_object())
    throw mixer::ConfigError(std::string("config section '") + name +
                             "' must be an object");
  return root.at(name);
}

// Every field is optional; absent fields keep their defaults.
template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw mixer::ConfigError(std::string("config key '") + key +
                             "': " + e.what());
  }
}

mixer::GenConfig gen_config(const json& j) {
  mixer::GenConfig c;
  maybe(j, "num_ids", c.num_ids);
  maybe(j, "k_s", c.k_s);
  maybe(j, "k_m", c.k_m);
  maybe(j, "input_dim", c.input_dim);
  maybe(j, "cams_v", c.cams_v);
  maybe(j, "cams_i", c.cams_i);
  maybe(j, "samples_per_id_per_cam", c.samples_per_id_per_cam);
  maybe(j, "noise_sigma", c.noise_sigma);
  maybe(j, "camera_bias_sigma", c.camera_bias_sigma);
  maybe(j, "seed", c.seed);
  maybe(j, "test_fraction", c.test_fraction);
  return c;
}

mixer::ModelConfig model_config(const json& j) {
  mixer::ModelConfig c;
  maybe(j, "input_dim", c.input_dim);
  maybe(j, "hidden_dims", c.hidden_dims);
  maybe(j, "d_e", c.d_e);
  maybe(j, "d_r", c.d_r);
  maybe(j, "num_ids", c.num_ids);
  maybe(j, "seed", c.seed);
  return c;
}

mixer::TrainConfig train_config(const json& j) {
  mixer::TrainConfig c;
  maybe(j, "epochs", c.epochs);
  maybe(j, "base_lr", c.base_lr);
  maybe(j, "warmup_epochs", c.warmup_epochs);
  maybe(j, "decay_epochs", c.decay_epochs);
  maybe(j, "p_ids", c.p_ids);
  maybe(j, "k_per_modality", c.k_per_modality);
  maybe(j, "grl_coeff", c.grl_coeff);
  maybe(j, "enable_ymr", c.enable_ymr);
  maybe(j, "adam_beta1", c.adam_beta1);
  maybe(j, "adam_beta2", c.adam_beta2);
  maybe(j, "adam_eps", c.adam_eps);
  maybe(j, "seed", c.seed);
  maybe(j, "lambda_m", c.weights.lambda_m);
  maybe(j, "lambda_o", c.weights.lambda_o);
  maybe(j, "lambda_f", c.weights.lambda_f);
  maybe(j, "margin_alpha", c.weights.margin_alpha);
  maybe(j, "cc_margin_rho", c.weights.cc_margin_rho);
  maybe(j, "orth_raw", c.weights.orth_raw);
  return c;
}

struct EvalOptions {
  std::vector<std::string> settings = {"Mix", "MixCam", "MixCamID", "MixID"};
  std::string embed_mode = "fused_rule";
  std::string query_modality = "I";
  int single_shot_trials = 0;
  uint64_t single_shot_seed = 0;
};

EvalOptions eval_options(const json& j) {
  EvalOptions o;
  maybe(j, "settings", o.settings);
  maybe(j, "embed_mode", o.embed_mode);
  maybe(j, "query_modality", o.query_modality);
  maybe(j, "single_shot_trials", o.single_shot_trials);
  maybe(j, "single_shot_seed", o.single_shot_seed);
  return o;
}

mixer::Modality modality_arg(const std::string& s) {
  if (s.size() == 1) return mixer::modality_from_char(s[0]);
  throw mixer::ConfigError("query modality must be V or I, got '" + s + "'");
}

struct Sweep {
  std::string param;
  std::vector<double> values;
};

// "lambda_m=0,0.2,0.4"
std::optional<Sweep> parse_sweep(const std::string& spec) {
  if (spec.empty()) return std::nullopt;
  const size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw mixer::ConfigError("sweep must look like name=v1,v2,...; got '" +
                             spec + "'");
  Sweep s;
  s.param = spec.substr(0, eq);
  if (s.param != "lambda_m" && s.param != "lambda_o" && s.param != "lambda_f")
    throw mixer::ConfigError("sweep parameter must be one of lambda_m, "
                             "lambda_o, lambda_f; got '" +
                             s.param + "'");
  std::string rest = spec.substr(eq + 1);
  size_t pos = 0;
  while (pos <= rest.size()) {
    const size_t comma = rest.find(',', pos);
    const std::string tok =
        rest.substr(pos, comma == std::string::npos ? comma : comma - pos);
    try {
      size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      s.values.push_back(v);
    } catch (const std::exception&) {
      throw mixer::ConfigError("sweep value '" + tok + "' is not a number");
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (s.values.empty())
    throw mixer::ConfigError("sweep needs at least one value");
  return s;
}

void apply_sweep_value(mixer::TrainConfig& cfg, const std::string& param,
                       double v) {
  if (param == "lambda_m")
    cfg.weights.lambda_m = v;
  else if (param == "lambda_o")
    cfg.weights.lambda_o = v;
  else
    cfg.weights.lambda_f = v;
}

std::string sweep_dir(const std::string& out, const std::string& param,
                      double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return out + "/sweep/" + param + "=" + buf;
}

// ---- gen ----

struct GenArgs {
  std::string config_path, out_dir;
  std::optional<uint64_t> seed;
};

int cmd_gen(const GenArgs& a) {
  mixer::GenConfig cfg = gen_config(section(load_config_file(a.config_path),
                                            "gen"));
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  fs::create_directories(a.out_dir);

  const mixer::Dataset ds = mixer::generate(cfg);
  mixer::save(ds, a.out_dir + "/dataset.csv");
  const mixer::OracleReport o = mixer::oracle_check(ds);
  std::printf(
      "wrote %s (%zu samples)\n"
      "nearest-centroid oracle: V %.4f  I %.4f  overall %.4f  (%d test "
      "samples)\n",
      (a.out_dir + "/dataset.csv").c_str(), ds.samples.size(), o.acc_v,
      o.acc_i, o.acc_overall, o.num_test);
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string config_path, out_dir, dataset_path, checkpoint_path, sweep_spec;
  std::optional<uint64_t> seed;
  bool resume = false;
};

void train_one(const mixer::Dataset& ds, mixer::ModelConfig mcfg,
               const mixer::TrainConfig& tcfg, bool resume,
               const std::string& resume_from, const std::string& dir) {
  fs::create_directories(dir);
  std::optional<mixer::MixerModel> model;
  if (resume) {
    model.emplace(mixer::MixerModel::load(resume_from));
  } else {
    mcfg.input_dim = ds.config.input_dim;
    mcfg.num_ids = ds.config.num_ids;
    mcfg.validate();
    model.emplace(mcfg);
  }
  const std::vector<mixer::EpochStats> history =
      mixer::train(*model, ds, tcfg);
  model->save(dir + "/model.ckpt");
  mixer::write_history(history, dir + "/history.csv");
  std::printf("wrote %s/model.ckpt (%d epochs total)\n", dir.c_str(),
              model->trained_epochs);
}

int cmd_train(const TrainArgs& a) {
  const json root = load_config_file(a.config_path);
  mixer::ModelConfig mcfg = model_config(section(root, "model"));
  mixer::TrainConfig tcfg = train_config(section(root, "train"));
  if (a.seed) {
    tcfg.seed = *a.seed;
    mcfg.seed = *a.seed;
  }
  tcfg.validate();
  tcfg.weights.validate();

  const std::string ds_path =
      a.dataset_path.empty() ? a.out_dir + "/dataset.csv" : a.dataset_path;
  const mixer::Dataset ds = mixer::load(ds_path);

  const std::optional<Sweep> sweep = parse_sweep(a.sweep_spec);
  if (!sweep) {
    const std::string from =
        a.checkpoint_path.empty() ? a.out_dir + "/model.ckpt"
                                  : a.checkpoint_path;
    train_one(ds, mcfg, tcfg, a.resume, from, a.out_dir);
    return 0;
  }
  if (a.resume)
    throw mixer::ConfigError("--resume and --sweep cannot be combined");
  for (double v : sweep->values) {
    mixer::TrainConfig cell = tcfg;
    apply_sweep_value(cell, sweep->param, v);
    cell.weights.validate();
    train_one(ds, mcfg, cell, false, "", sweep_dir(a.out_dir, sweep->param, v));
  }
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string config_path, out_dir, dataset_path, checkpoint_path, sweep_spec;
  std::vector<std::string> settings;
  std::string embed_mode, query_modality;
  std::optional<int> single_shot_trials;
  std::optional<uint64_t> seed;
};

std::vector<mixer::ReportRow> eval_checkpoint(const std::string& ckpt,
                                              const mixer::Dataset& ds,
                                              const EvalOptions& opt) {
  const mixer::MixerModel model = mixer::MixerModel::load(ckpt);
  const std::vector<mixer::EmbeddingRecord> records =
      model.embed_dataset(ds.split(mixer::Split::test));
  const mixer::Modality qmod = modality_arg(opt.query_modality);

  std::vector<mixer::ReportRow> rows;
  for (const std::string& name : opt.settings) {
    mixer::GallerySetting setting;
    setting.kind = mixer::kind_from_name(name);
    setting.embed_mode = mixer::embed_mode_from_name(opt.embed_mode);
    setting.single_shot_trials = opt.single_shot_trials;
    setting.single_shot_seed = opt.single_shot_seed;
    mixer::ReportRow row;
    row.setting = setting;
    row.query_modality = qmod;
    row.report = mixer::evaluate(records, qmod, setting);
    rows.push_back(row);
  }
  // diagnostic histogram for the first requested setting
  if (!rows.empty()) {
    const mixer::DistanceDistribution d =
        mixer::distance_distribution(records, rows.front().setting);
    mixer::write_histogram(d, fs::path(ckpt).parent_path().string() +
                                  "/dist_hist.csv");
  }
  return rows;
}

void write_aggregate(const std::vector<std::string>& variants,
                     const std::vector<std::vector<mixer::ReportRow>>& grids,
                     const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw mixer::ParseError("report: cannot open " + path +
                                   " for write");
  os << "variant,setting,embed_mode,query_modality,R1,R5,R10,R20,mAP,mINP,"
        "used,skipped\n";
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (size_t i = 0; i < variants.size(); ++i)
    for (const mixer::ReportRow& r : grids[i]) {
      os << variants[i] << ',' << mixer::kind_name(r.setting.kind) << ','
         << mixer::embed_mode_name(r.setting.embed_mode) << ','
         << mixer::modality_char(r.query_modality);
      put(r.report.r1);
      put(r.report.r5);
      put(r.report.r10);
      put(r.report.r20);
      put(r.report.mAP);
      put(r.report.mINP);
      os << ',' << r.report.num_queries_used << ','
         << r.report.num_queries_skipped << "\n";
    }
}

int cmd_eval(const EvalArgs& a) {
  const json root = load_config_file(a.config_path);
  EvalOptions opt = eval_options(section(root, "eval"));
  if (!a.settings.empty()) opt.settings = a.settings;
  if (!a.embed_mode.empty()) opt.embed_mode = a.embed_mode;
  if (!a.query_modality.empty()) opt.query_modality = a.query_modality;
  if (a.single_shot_trials) opt.single_shot_trials = *a.single_shot_trials;
  if (a.seed) opt.single_shot_seed = *a.seed;
  if (opt.settings.empty())
    throw mixer::ConfigError("eval: settings list is empty");

  fs::create_directories(a.out_dir);
  const std::string ds_path =
      a.dataset_path.empty() ? a.out_dir + "/dataset.csv" : a.dataset_path;
  const mixer::Dataset ds = mixer::load(ds_path);

  const std::optional<Sweep> sweep = parse_sweep(a.sweep_spec);
  if (!sweep) {
    const std::string ckpt = a.checkpoint_path.empty()
                                 ? a.out_dir + "/model.ckpt"
                                 : a.checkpoint_path;
    const std::vector<mixer::ReportRow> rows = eval_checkpoint(ckpt, ds, opt);
    mixer::write_report(rows, a.out_dir + "/report.csv");
    std::printf("wrote %s/report.csv (%zu rows)\n", a.out_dir.c_str(),
                rows.size());
    return 0;
  }

  std::vector<std::string> variants;
  std::vector<std::vector<mixer::ReportRow>> grids;
  for (double v : sweep->values) {
    const std::string dir = sweep_dir(a.out_dir, sweep->param, v);
    const std::vector<mixer::ReportRow> rows =
        eval_checkpoint(dir + "/model.ckpt", ds, opt);
    mixer::write_report(rows, dir + "/report.csv");
    variants.push_back(fs::path(dir).filename().string());
    grids.push_back(rows);
  }
  write_aggregate(variants, grids, a.out_dir + "/report.csv");
  std::printf("wrote %s/report.csv (%zu variants)\n", a.out_dir.c_str(),
              variants.size());
  return 0;
}

// ---- verify ----

struct VerifyArgs {
  std::string out_dir;
  uint64_t seed = 0;
  bool inject_fault = false;
};

int cmd_verify(const VerifyArgs& a) {
  fs::create_directories(a.out_dir);
  const std::vector<mixer::CheckReport> checks =
      mixer::run_all_checks(a.seed, a.inject_fault);
  mixer::write_checks(checks, a.out_dir + "/verify.csv");
  int failures = 0;
  for (const mixer::CheckReport& c : checks) {
    std::printf("%-36s trials=%-5d max_violation=%.3e %s\n", c.name.c_str(),
                c.trials, c.max_violation, c.pass ? "pass" : "FAIL");
    if (!c.pass) {
      std::fprintf(stderr, "verification failed: %s (max violation %.17g)\n",
                   c.name.c_str(), c.max_violation);
      ++failures;
    }
  }
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "mixer: synthetic visible/infrared feature lab. Dataset generation, "
      "disentangled training, mixed-gallery retrieval evaluation, and "
      "information-theory verification."};
  app.require_subcommand(1);

  GenArgs ga;
  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", ga.config_path, "JSON config file");
  gen->add_option("--out", ga.out_dir, "output directory")->required();
  gen->add_option("--seed", ga.seed, "override generator seed");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", ta.config_path, "JSON config file");
  train->add_option("--out", ta.out_dir, "output directory")->required();
  train->add_option("--dataset", ta.dataset_path,
                    "dataset CSV (default <out>/dataset.csv)");
  train->add_option("--checkpoint", ta.checkpoint_path,
                    "checkpoint to resume from (default <out>/model.ckpt)");
  train->add_flag("--resume", ta.resume,
                  "continue training an existing checkpoint");
  train->add_option("--seed", ta.seed, "override train and init seeds");
  train->add_option("--sweep", ta.sweep_spec,
                    "grid over a loss weight, e.g. lambda_m=0,0.2,0.4");

  EvalArgs ea;
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--config", ea.config_path, "JSON config file");
  eval->add_option("--out", ea.out_dir, "output directory")->required();
  eval->add_option("--dataset", ea.dataset_path,
                   "dataset CSV (default <out>/dataset.csv)");
  eval->add_option("--checkpoint", ea.checkpoint_path,
                   "checkpoint (default <out>/model.ckpt)");
  eval->add_option("--settings", ea.settings,
                   "comma list of gallery settings")
      ->delimiter(',');
  eval->add_option("--embed-mode", ea.embed_mode,
                   "fused_rule | erased_only | related_only");
  eval->add_option("--query-modality", ea.query_modality, "V or I");
  eval->add_option("--single-shot", ea.single_shot_trials,
                   "single-shot trials (0 = all-shot)");
  eval->add_option("--seed", ea.seed, "single-shot sampling seed");
  eval->add_option("--sweep", ea.sweep_spec,
                   "aggregate a trained sweep grid, e.g. lambda_m=0,0.2,0.4");

  VerifyArgs va;
  CLI::App* verify =
      app.add_subcommand("verify", "run the information-theory check suite");
  verify->add_option("--out", va.out_dir, "output directory")->required();
  verify->add_option("--seed", va.seed, "check suite seed");
  verify->add_flag("--inject-fault", va.inject_fault,
                   "append a failing row (negative-path testing)")
      ->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(ga);
    if (train->parsed()) return cmd_train(ta);
    if (eval->parsed()) return cmd_eval(ea);
    return cmd_verify(va);
  } catch (const mixer::NumericError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
