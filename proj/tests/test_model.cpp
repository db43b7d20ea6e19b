#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "mixer/error.hpp"
#include "mixer/model.hpp"
#include "mixer/rng.hpp"

using namespace mixer;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.input_dim = 6;
  c.hidden_dims = {10, 8};
  c.d_e = 4;
  c.d_r = 4;
  c.num_ids = 5;
  c.seed = 42;
  return c;
}

Tensor random_batch(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-1.0, 1.0);
  return t;
}

std::vector<Sample> make_samples(const Tensor& x,
                                 const std::vector<Modality>& mods) {
  std::vector<Sample> out;
  for (int r = 0; r < x.rows(); ++r) {
    Sample s;
    s.features.assign(x.row(r), x.row(r) + x.cols());
    s.id = r % 3;
    s.modality = mods[r];
    s.camera = mods[r] == Modality::V ? 0 : 3;
    s.split = Split::test;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("parameter count matches the layer-shape formula") {
  const ModelConfig c = tiny_config();
  MixerModel m(c);
  const int s = c.shared_width();
  size_t expect = 0;
  int in = c.input_dim;
  for (int h : c.hidden_dims) {
    expect += static_cast<size_t>(in) * h + h;
    in = h;
  }
  expect += static_cast<size_t>(s) * c.d_e + c.d_e;        // erased head
  expect += 2 * (static_cast<size_t>(s) * c.d_r + c.d_r);  // related heads
  expect += static_cast<size_t>(c.d_e) * c.num_ids + c.num_ids;
  expect += static_cast<size_t>(c.d_r) * 2 * c.num_ids + 2 * c.num_ids;
  expect += static_cast<size_t>(c.d_e) * 2 + 2;
  CHECK(m.parameter_count() == expect);

  size_t total = 0;
  for (const Tensor* p : static_cast<const MixerModel&>(m).parameters())
    total += p->size();
  CHECK(total == expect);
}

TEST_CASE("forward shapes on a mixed batch") {
  const ModelConfig c = tiny_config();
  MixerModel m(c);
  const int B = 16;
  Tensor x = random_batch(B, c.input_dim, 1);
  std::vector<Modality> mods(B);
  for (int i = 0; i < B; ++i)
    mods[i] = i % 2 == 0 ? Modality::V : Modality::I;

  Tape t;
  const auto bound = m.bind(t, false);
  const auto fwd = m.forward(t, bound, x, mods);
  CHECK(t.value(fwd.z).size() == static_cast<size_t>(B) * c.shared_width());
  CHECK(t.value(fwd.z_e).size() == static_cast<size_t>(B) * c.d_e);
  CHECK(t.value(fwd.z_r).size() == static_cast<size_t>(B) * c.d_r);
}

TEST_CASE("head isolation: single-modality batch leaves the other head cold") {
  const ModelConfig c = tiny_config();
  MixerModel m(c);
  Tensor x = random_batch(3, c.input_dim, 2);
  const std::vector<Modality> vmods(3, Modality::V);

  Tape t;
  const auto bound = m.bind(t, true);
  const auto fwd = m.forward(t, bound, x, vmods);
  t.backward(t.mean_all(fwd.z_r));

  const Tensor& gvw = t.grad(bound.fv_w);
  const Tensor& giw = t.grad(bound.fi_w);
  const Tensor& gib = t.grad(bound.fi_b);
  double vsum = 0.0, isum = 0.0;
  for (size_t i = 0; i < gvw.size(); ++i) vsum += std::abs(gvw.data()[i]);
  for (size_t i = 0; i < giw.size(); ++i) isum += std::abs(giw.data()[i]);
  for (size_t i = 0; i < gib.size(); ++i) isum += std::abs(gib.data()[i]);
  CHECK(vsum > 0.0);
  CHECK(isum == 0.0);  // exactly zero, not merely small

  const std::vector<Modality> imods(3, Modality::I);
  Tape t2;
  const auto bound2 = m.bind(t2, true);
  const auto fwd2 = m.forward(t2, bound2, x, imods);
  t2.backward(t2.mean_all(fwd2.z_r));
  const Tensor& gvw2 = t2.grad(bound2.fv_w);
  double vsum2 = 0.0;
  for (size_t i = 0; i < gvw2.size(); ++i) vsum2 += std::abs(gvw2.data()[i]);
  CHECK(vsum2 == 0.0);
}

TEST_CASE("z_e ignores the modality label, z_r does not") {
  const ModelConfig c = tiny_config();
  MixerModel m(c);
  Tensor x = random_batch(1, c.input_dim, 3);

  Tape tv, ti;
  const auto bv = m.bind(tv, false);
  const auto bi = m.bind(ti, false);
  const auto fv = m.forward(tv, bv, x, {Modality::V});
  const auto fi = m.forward(ti, bi, x, {Modality::I});

  for (int j = 0; j < c.d_e; ++j)
    CHECK(tv.value(fv.z_e).at(0, j) == ti.value(fi.z_e).at(0, j));
  double diff = 0.0;
  for (int j = 0; j < c.d_r; ++j)
    diff += std::abs(tv.value(fv.z_r).at(0, j) - ti.value(fi.z_r).at(0, j));
  CHECK(diff > 1e-6);
}

TEST_CASE("fuse hand values and norm") {
  const std::vector<double> f = fuse({3, 4}, {1, 0});
  REQUIRE(f.size() == 4);
  CHECK(f[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(f[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(f[2] == 1.0);
  CHECK(f[3] == 0.0);

  double nrm = 0.0;
  for (double v : f) nrm += v * v;
  CHECK(std::sqrt(nrm) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));

  CHECK_THROWS_AS(fuse({0, 0}, {1, 0}), DegenerateVectorError);
}

TEST_CASE("embed_dataset preserves order, metadata and determinism") {
  const ModelConfig c = tiny_config();
  MixerModel m(c);
  Tensor x = random_batch(10, c.input_dim, 4);
  std::vector<Modality> mods(10);
  for (int i = 0; i < 10; ++i)
    mods[i] = i < 5 ? Modality::V : Modality::I;
  const std::vector<Sample> samples = make_samples(x, mods);

  CHECK(m.embed_dataset({}).empty());

  const auto rec1 = m.embed_dataset(samples);
  const auto rec2 = m.embed_dataset(samples);
  REQUIRE(rec1.size() == samples.size());
  for (size_t i = 0; i < rec1.size(); ++i) {
    CHECK(rec1[i].id == samples[i].id);
    CHECK(rec1[i].modality == samples[i].modality);
    CHECK(rec1[i].camera == samples[i].camera);
    REQUIRE(rec1[i].z_f.size() == static_cast<size_t>(c.d_e + c.d_r));
    double nrm = 0.0;
    for (double v : rec1[i].z_f) nrm += v * v;
    CHECK(std::abs(nrm - 2.0) < 1e-9);
    for (size_t j = 0; j < rec1[i].z_e.size(); ++j)
      CHECK(rec1[i].z_e[j] == rec2[i].z_e[j]);  // bitwise determinism
    for (size_t j = 0; j < rec1[i].z_r.size(); ++j)
      CHECK(rec1[i].z_r[j] == rec2[i].z_r[j]);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const ModelConfig c = tiny_config();
  MixerModel m(c);
  m.trained_epochs = 17;
  const std::string path = "test_model_ckpt.bin";
  m.save(path);
  MixerModel r = MixerModel::load(path);

  CHECK(r.trained_epochs == 17);
  CHECK(r.config().input_dim == c.input_dim);
  CHECK(r.config().hidden_dims == c.hidden_dims);
  CHECK(r.config().num_ids == c.num_ids);
  CHECK(r.config().seed == c.seed);

  const auto pa = static_cast<const MixerModel&>(m).parameters();
  const auto pb = static_cast<const MixerModel&>(r).parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i]->size() == pb[i]->size());
    for (size_t j = 0; j < pa[i]->size(); ++j)
      CHECK(pa[i]->data()[j] == pb[i]->data()[j]);
  }

  // save twice: byte-identical files
  const std::string path2 = "test_model_ckpt2.bin";
  r.save(path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string s1((std::istreambuf_iterator<char>(f1)),
                       std::istreambuf_iterator<char>());
  const std::string s2((std::istreambuf_iterator<char>(f2)),
                       std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  f1.close();
  f2.close();
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("checkpoint rejects foreign and truncated files") {
  const std::string path = "test_model_bad.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTMIX nonsense";
  }
  CHECK_THROWS_AS(MixerModel::load(path), ParseError);

  MixerModel m(tiny_config());
  m.save(path);
  {
    std::ifstream is(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(is)),
                      std::istreambuf_iterator<char>());
    is.close();
    bytes.resize(bytes.size() - 9);
    std::ofstream os(path, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(MixerModel::load(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("different seeds give different parameters") {
  ModelConfig a = tiny_config();
  ModelConfig b = tiny_config();
  b.seed = 43;
  MixerModel ma(a), mb(b);
  const auto pa = static_cast<const MixerModel&>(ma).parameters();
  const auto pb = static_cast<const MixerModel&>(mb).parameters();
  double diff = 0.0;
  for (size_t i = 0; i < pa.size(); ++i)
    for (size_t j = 0; j < pa[i]->size(); ++j)
      diff += std::abs(pa[i]->data()[j] - pb[i]->data()[j]);
  CHECK(diff > 0.0);
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  c.d_e = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.num_ids = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.hidden_dims = {16, 0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
