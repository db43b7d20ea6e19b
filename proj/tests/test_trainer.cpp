#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "mixer/error.hpp"
#include "mixer/trainer.hpp"

using namespace mixer;

namespace {

GenConfig tiny_gen(int ids = 4) {
  GenConfig c;
  c.num_ids = ids;
  c.k_s = 3;
  c.k_m = 2;
  c.input_dim = 8;
  c.cams_v = 1;
  c.cams_i = 1;
  c.samples_per_id_per_cam = 6;
  c.seed = 21;
  return c;
}

ModelConfig tiny_model(const GenConfig& g) {
  ModelConfig c;
  c.input_dim = g.input_dim;
  c.hidden_dims = {12};
  c.d_e = 6;
  c.d_r = 6;
  c.num_ids = g.num_ids;
  c.seed = 3;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.epochs = 2;
  c.p_ids = 2;
  c.k_per_modality = 2;
  c.warmup_epochs = 1;
  c.decay_epochs = {};
  c.seed = 9;
  return c;
}

}  // namespace

TEST_CASE("lr schedule: step thresholds and warm-up") {
  TrainConfig c;
  c.base_lr = 0.0004;
  c.warmup_epochs = 0;
  c.decay_epochs = {{80, 0.1}, {120, 0.01}};
  CHECK(lr_at(0, c) == doctest::Approx(0.0004).epsilon(1e-12));
  CHECK(lr_at(79, c) == doctest::Approx(0.0004).epsilon(1e-12));
  CHECK(lr_at(100, c) == doctest::Approx(0.00004).epsilon(1e-12));
  CHECK(lr_at(150, c) == doctest::Approx(0.000004).epsilon(1e-12));

  c.warmup_epochs = 10;
  CHECK(lr_at(4, c) == doctest::Approx(0.0002).epsilon(1e-12));
  CHECK(lr_at(9, c) == doctest::Approx(0.0004).epsilon(1e-12));

  // the factor replaces the earlier one rather than compounding
  CHECK(lr_at(120, c) == doctest::Approx(0.0004 * 0.01).epsilon(1e-12));
}

TEST_CASE("lr is non-increasing after warm-up") {
  TrainConfig c;
  c.base_lr = 0.0004;
  c.warmup_epochs = 10;
  c.decay_epochs = {{30, 0.1}, {45, 0.01}};
  double prev = lr_at(c.warmup_epochs - 1, c);
  for (int e = c.warmup_epochs; e < 80; ++e) {
    const double lr = lr_at(e, c);
    CHECK(lr <= prev + 1e-18);
    prev = lr;
  }
}

TEST_CASE("sample_batch composition and determinism") {
  const Dataset ds = generate(tiny_gen(5));
  const std::vector<Sample> pool = ds.split(Split::train);

  Rng rng(derive_seed(1, 2, 3));
  const std::vector<int> batch = sample_batch(pool, 3, 2, rng);
  REQUIRE(batch.size() == 3 * 2 * 2);

  std::map<int, std::pair<int, int>> per_id;  // id -> (V count, I count)
  for (int idx : batch) {
    const Sample& s = pool[idx];
    auto& c = per_id[s.id];
    (s.modality == Modality::V ? c.first : c.second) += 1;
  }
  CHECK(per_id.size() == 3);
  for (const auto& [id, c] : per_id) {
    CHECK(c.first == 2);
    CHECK(c.second == 2);
  }

  Rng rng2(derive_seed(1, 2, 3));
  CHECK(sample_batch(pool, 3, 2, rng2) == batch);
}

TEST_CASE("sample_batch shrinks p to the available identities") {
  const Dataset ds = generate(tiny_gen(3));
  const std::vector<Sample> pool = ds.split(Split::train);
  Rng rng(4);
  const std::vector<int> batch = sample_batch(pool, 10, 2, rng);
  std::set<int> ids;
  for (int idx : batch) ids.insert(pool[idx].id);
  CHECK(ids.size() == 3);
  CHECK(batch.size() == 3 * 2 * 2);
}

TEST_CASE("sample_batch errors: missing modality, too few identities") {
  const Dataset ds = generate(tiny_gen(4));
  std::vector<Sample> pool = ds.split(Split::train);

  std::vector<Sample> v_only;
  for (const Sample& s : pool)
    if (s.modality == Modality::V) v_only.push_back(s);
  Rng rng(5);
  CHECK_THROWS_AS(sample_batch(v_only, 2, 2, rng), SamplingError);

  std::vector<Sample> one_id;
  for (const Sample& s : pool)
    if (s.id == 0) one_id.push_back(s);
  CHECK_THROWS_AS(sample_batch(one_id, 2, 2, rng), SamplingError);
}

TEST_CASE("sample_batch draws with replacement when a bucket is short") {
  const Dataset ds = generate(tiny_gen(4));
  std::vector<Sample> pool;
  // keep a single V sample per id, all I samples
  std::set<int> seen_v;
  for (const Sample& s : ds.split(Split::train)) {
    if (s.modality == Modality::V) {
      if (!seen_v.insert(s.id).second) continue;
    }
    pool.push_back(s);
  }
  Rng rng(6);
  const std::vector<int> batch = sample_batch(pool, 2, 3, rng);
  REQUIRE(batch.size() == 2 * 2 * 3);
  std::map<int, int> v_count;
  for (int idx : batch)
    if (pool[idx].modality == Modality::V) v_count[pool[idx].id] += 1;
  for (const auto& [id, n] : v_count) CHECK(n == 3);  // same index repeated
}

TEST_CASE("adam_step moves parameters and zero grad is a no-op") {
  const GenConfig g = tiny_gen();
  MixerModel model(tiny_model(g));
  OptimizerState st = OptimizerState::for_model(model);
  std::vector<Tensor*> params = model.parameters();

  std::vector<Tensor> zero_grads;
  for (Tensor* p : params) zero_grads.emplace_back(p->rows(), p->cols());
  std::vector<const Tensor*> gptrs;
  for (Tensor& g2 : zero_grads) gptrs.push_back(&g2);

  std::vector<double> before;
  for (Tensor* p : params)
    before.insert(before.end(), p->data(), p->data() + p->size());

  TrainConfig tc = tiny_train();
  adam_step(params, gptrs, st, 1e-3, tc);
  CHECK(st.step == 1);
  size_t off = 0;
  for (Tensor* p : params)
    for (size_t i = 0; i < p->size(); ++i) CHECK(p->data()[i] == before[off++]);

  // nonzero gradient on one tensor moves only that tensor
  zero_grads[0].fill(0.5);
  adam_step(params, gptrs, st, 1e-3, tc);
  off = 0;
  for (size_t t = 0; t < params.size(); ++t)
    for (size_t i = 0; i < params[t]->size(); ++i, ++off) {
      if (t == 0)
        CHECK(params[t]->data()[i] != before[off]);
      else
        CHECK(params[t]->data()[i] == before[off]);
    }
}

TEST_CASE("train epochs=0 returns empty history, leaves model unchanged") {
  const GenConfig g = tiny_gen();
  const Dataset ds = generate(g);
  MixerModel model(tiny_model(g));

  std::vector<double> before;
  for (const Tensor* p :
       static_cast<const MixerModel&>(model).parameters())
    before.insert(before.end(), p->data(), p->data() + p->size());

  TrainConfig tc = tiny_train();
  tc.epochs = 0;
  const auto history = train(model, ds, tc);
  CHECK(history.empty());
  CHECK(model.trained_epochs == 0);

  size_t off = 0;
  for (const Tensor* p : static_cast<const MixerModel&>(model).parameters())
    for (size_t i = 0; i < p->size(); ++i)
      CHECK(p->data()[i] == before[off++]);
}

TEST_CASE("train determinism: same seed, same parameters bitwise") {
  const GenConfig g = tiny_gen();
  const Dataset ds = generate(g);
  const TrainConfig tc = tiny_train();

  MixerModel a(tiny_model(g));
  MixerModel b(tiny_model(g));
  train(a, ds, tc);
  train(b, ds, tc);

  const auto pa = static_cast<const MixerModel&>(a).parameters();
  const auto pb = static_cast<const MixerModel&>(b).parameters();
  for (size_t t = 0; t < pa.size(); ++t)
    for (size_t i = 0; i < pa[t]->size(); ++i)
      CHECK(pa[t]->data()[i] == pb[t]->data()[i]);
}

TEST_CASE("history breakdown satisfies the additivity invariant") {
  const GenConfig g = tiny_gen();
  const Dataset ds = generate(g);
  MixerModel model(tiny_model(g));
  TrainConfig tc = tiny_train();
  tc.epochs = 3;

  const auto history = train(model, ds, tc);
  REQUIRE(history.size() == 3);
  for (const EpochStats& st : history) {
    const LossBreakdown& b = st.mean;
    CHECK(b.total ==
          doctest::Approx(b.l_yme + b.l_ymr + tc.weights.lambda_m * b.l_m +
                          tc.weights.lambda_o * b.l_o +
                          tc.weights.lambda_f * b.l_f)
              .epsilon(1e-9));
    CHECK(std::isfinite(b.total));
    CHECK(st.lr == lr_at(st.epoch, tc));
  }
}

TEST_CASE("resume continues the epoch counter and the lr schedule") {
  const GenConfig g = tiny_gen();
  const Dataset ds = generate(g);
  MixerModel model(tiny_model(g));
  TrainConfig tc = tiny_train();
  tc.epochs = 2;
  tc.warmup_epochs = 4;

  const auto h1 = train(model, ds, tc);
  CHECK(model.trained_epochs == 2);
  const auto h2 = train(model, ds, tc);
  CHECK(model.trained_epochs == 4);
  REQUIRE(h2.size() == 2);
  CHECK(h2[0].epoch == 2);
  CHECK(h2[1].epoch == 3);
  // warmup lr keeps climbing across the resume boundary
  CHECK(h2[0].lr == doctest::Approx(tc.base_lr * 3.0 / 4.0).epsilon(1e-12));
  CHECK(h2[1].lr == doctest::Approx(tc.base_lr).epsilon(1e-12));
}

TEST_CASE("overfit: tiny fixed problem drops below 10% of initial loss") {
  // 2 identities, 4 samples per cell is the smallest mining-viable setup;
  // 300 steps of full-strength Adam must crush the loss
  GenConfig g = tiny_gen(2);
  g.samples_per_id_per_cam = 4;
  g.noise_sigma = 0.02;
  const Dataset ds = generate(g);

  ModelConfig mc = tiny_model(g);
  MixerModel model(mc);

  TrainConfig tc;
  tc.p_ids = 2;
  tc.k_per_modality = 2;
  tc.base_lr = 3e-3;
  tc.warmup_epochs = 0;
  tc.decay_epochs = {};
  tc.seed = 13;
  tc.epochs = 300;  // 1 iteration per epoch at this size

  const auto history = train(model, ds, tc);
  REQUIRE(history.size() == 300);
  CHECK(history.back().mean.total < 0.1 * history.front().mean.total);
}

TEST_CASE("write_history emits one row per epoch with the fixed header") {
  const GenConfig g = tiny_gen();
  const Dataset ds = generate(g);
  MixerModel model(tiny_model(g));
  const auto history = train(model, ds, tiny_train());

  const std::string path = "test_trainer_history.csv";
  write_history(history, path);
  std::ifstream is(path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "epoch,lr,l_yme,l_ymr,l_m,l_o,l_f,total");
  int rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == static_cast<int>(history.size()));
  is.close();
  std::filesystem::remove(path);
}

TEST_CASE("config validation") {
  TrainConfig c = tiny_train();
  c.p_ids = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_train();
  c.k_per_modality = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_train();
  c.base_lr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_train();
  c.epochs = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
