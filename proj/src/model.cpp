#include "mixer/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mixer/kernels.hpp"
#include "mixer/rng.hpp"

namespace mixer {

void ModelConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
  for (int h : hidden_dims)
    if (h < 1) throw ConfigError("model: hidden dims must be >= 1");
  if (d_e < 1 || d_r < 1) throw ConfigError("model: d_e and d_r must be >= 1");
  if (num_ids < 1) throw ConfigError("model: num_ids must be >= 1");
}

std::vector<double> fuse(const std::vector<double>& z_e,
                         const std::vector<double>& z_r) {
  auto normalized_into = [](const std::vector<double>& v,
                            std::vector<double>& out, size_t at) {
    const double norm = std::sqrt(kernels::dot(v.data(), v.data(), v.size()));
    if (norm <= 1e-12)
      throw DegenerateVectorError("fuse: near-zero embedding norm");
    for (size_t i = 0; i < v.size(); ++i) out[at + i] = v[i] / norm;
  };
  std::vector<double> f(z_e.size() + z_r.size());
  normalized_into(z_e, f, 0);
  normalized_into(z_r, f, z_e.size());
  return f;
}

namespace {

// per-parameter seed tags, stable across versions of this file
enum SeedTag : uint64_t {
  tag_backbone = 1,
  tag_fs = 2,
  tag_fv = 3,
  tag_fi = 4,
  tag_cls_e = 5,
  tag_cls_r = 6,
  tag_cls_m = 7,
};

Tensor glorot(int fan_in, int fan_out, uint64_t seed) {
  Tensor w(fan_in, fan_out);
  Rng rng(seed);
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-a, a);
  return w;
}

}  // namespace

MixerModel::MixerModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  init_params();
}

void MixerModel::init_params() {
  int prev = cfg_.input_dim;
  backbone_w_.clear();
  backbone_b_.clear();
  for (size_t l = 0; l < cfg_.hidden_dims.size(); ++l) {
    const int h = cfg_.hidden_dims[l];
    backbone_w_.push_back(glorot(prev, h, derive_seed(cfg_.seed, tag_backbone, l)));
    backbone_b_.push_back(Tensor(1, h));
    prev = h;
  }
  const int s = cfg_.shared_width();
  fs_w_ = glorot(s, cfg_.d_e, derive_seed(cfg_.seed, tag_fs, 0));
  fs_b_ = Tensor(1, cfg_.d_e);
  fv_w_ = glorot(s, cfg_.d_r, derive_seed(cfg_.seed, tag_fv, 0));
  fv_b_ = Tensor(1, cfg_.d_r);
  fi_w_ = glorot(s, cfg_.d_r, derive_seed(cfg_.seed, tag_fi, 0));
  fi_b_ = Tensor(1, cfg_.d_r);
  cls_e_w_ = glorot(cfg_.d_e, cfg_.num_ids, derive_seed(cfg_.seed, tag_cls_e, 0));
  cls_e_b_ = Tensor(1, cfg_.num_ids);
  cls_r_w_ = glorot(cfg_.d_r, 2 * cfg_.num_ids, derive_seed(cfg_.seed, tag_cls_r, 0));
  cls_r_b_ = Tensor(1, 2 * cfg_.num_ids);
  cls_m_w_ = glorot(cfg_.d_e, 2, derive_seed(cfg_.seed, tag_cls_m, 0));
  cls_m_b_ = Tensor(1, 2);
}

std::vector<Tensor*> MixerModel::parameters() {
  std::vector<Tensor*> out;
  for (size_t l = 0; l < backbone_w_.size(); ++l) {
    out.push_back(&backbone_w_[l]);
    out.push_back(&backbone_b_[l]);
  }
  for (Tensor* t : {&fs_w_, &fs_b_, &fv_w_, &fv_b_, &fi_w_, &fi_b_, &cls_e_w_,
                    &cls_e_b_, &cls_r_w_, &cls_r_b_, &cls_m_w_, &cls_m_b_})
    out.push_back(t);
  return out;
}

std::vector<const Tensor*> MixerModel::parameters() const {
  auto mut = const_cast<MixerModel*>(this)->parameters();
  return std::vector<const Tensor*>(mut.begin(), mut.end());
}

size_t MixerModel::parameter_count() const {
  size_t n = 0;
  for (const Tensor* t : parameters()) n += t->size();
  return n;
}

MixerModel::Bound MixerModel::bind(Tape& t, bool requires_grad) const {
  Bound b;
  for (size_t l = 0; l < backbone_w_.size(); ++l) {
    b.backbone_w.push_back(t.leaf(backbone_w_[l], requires_grad));
    b.backbone_b.push_back(t.leaf(backbone_b_[l], requires_grad));
    b.all.push_back(b.backbone_w.back());
    b.all.push_back(b.backbone_b.back());
  }
  auto reg = [&](const Tensor& p) {
    const int id = t.leaf(p, requires_grad);
    b.all.push_back(id);
    return id;
  };
  b.fs_w = reg(fs_w_);
  b.fs_b = reg(fs_b_);
  b.fv_w = reg(fv_w_);
  b.fv_b = reg(fv_b_);
  b.fi_w = reg(fi_w_);
  b.fi_b = reg(fi_b_);
  b.cls_e_w = reg(cls_e_w_);
  b.cls_e_b = reg(cls_e_b_);
  b.cls_r_w = reg(cls_r_w_);
  b.cls_r_b = reg(cls_r_b_);
  b.cls_m_w = reg(cls_m_w_);
  b.cls_m_b = reg(cls_m_b_);
  return b;
}

MixerModel::Forward MixerModel::forward(Tape& t, const Bound& b,
                                        const Tensor& x,
                                        const std::vector<Modality>& mods) const {
  if (x.cols() != cfg_.input_dim)
    throw DimensionError("forward: expected " + std::to_string(cfg_.input_dim) +
                         " features, got " + std::to_string(x.cols()));
  if (static_cast<int>(mods.size()) != x.rows())
    throw DimensionError("forward: modality list length mismatch");

  Forward f;
  int h = t.leaf(x, false);
  for (size_t l = 0; l < backbone_w_.size(); ++l)
    h = t.tanh(linear(t, h, b.backbone_w[l], b.backbone_b[l]));
  f.z = h;
  f.z_e = linear(t, f.z, b.fs_w, b.fs_b);

  std::vector<int> v_rows, i_rows;
  for (size_t r = 0; r < mods.size(); ++r)
    (mods[r] == Modality::V ? v_rows : i_rows).push_back(static_cast<int>(r));

  // Routing by gather keeps the unused head out of the graph entirely, so a
  // single-modality batch leaves the other head's gradients exactly zero.
  if (i_rows.empty()) {
    f.z_r = linear(t, f.z, b.fv_w, b.fv_b);
  } else if (v_rows.empty()) {
    f.z_r = linear(t, f.z, b.fi_w, b.fi_b);
  } else {
    const int zv = linear(t, t.gather_rows(f.z, v_rows), b.fv_w, b.fv_b);
    const int zi = linear(t, t.gather_rows(f.z, i_rows), b.fi_w, b.fi_b);
    const int cat = t.concat_rows(zv, zi);
    std::vector<int> inverse(mods.size());
    int pos = 0;
    for (int r : v_rows) inverse[r] = pos++;
    for (int r : i_rows) inverse[r] = pos++;
    f.z_r = t.gather_rows(cat, inverse);
  }
  return f;
}

std::vector<EmbeddingRecord> MixerModel::embed_dataset(
    const std::vector<Sample>& samples) const {
  std::vector<EmbeddingRecord> out;
  out.reserve(samples.size());
  const size_t chunk = 1024;
  for (size_t start = 0; start < samples.size(); start += chunk) {
    const size_t end = std::min(samples.size(), start + chunk);
    const int rows = static_cast<int>(end - start);
    Tensor x(rows, cfg_.input_dim);
    std::vector<Modality> mods(rows);
    for (int r = 0; r < rows; ++r) {
      const Sample& s = samples[start + r];
      if (static_cast<int>(s.features.size()) != cfg_.input_dim)
        throw DimensionError("embed_dataset: sample feature length " +
                             std::to_string(s.features.size()));
      std::memcpy(x.row(r), s.features.data(),
                  sizeof(double) * cfg_.input_dim);
      mods[r] = s.modality;
    }
    Tape t;
    const Bound b = bind(t, false);
    const Forward f = forward(t, b, x, mods);
    const Tensor& ze = t.value(f.z_e);
    const Tensor& zr = t.value(f.z_r);
    for (int r = 0; r < rows; ++r) {
      EmbeddingRecord rec;
      rec.z_e.assign(ze.row(r), ze.row(r) + cfg_.d_e);
      rec.z_r.assign(zr.row(r), zr.row(r) + cfg_.d_r);
      rec.z_f = fuse(rec.z_e, rec.z_r);
      rec.id = samples[start + r].id;
      rec.modality = samples[start + r].modality;
      rec.camera = samples[start + r].camera;
      out.push_back(std::move(rec));
    }
  }
  return out;
}

namespace {

constexpr char kMagic[6] = {'M', 'I', 'X', 'E', 'R', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw ParseError("checkpoint: truncated header");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

// Little-endian f64 payload. Byte-swapping on big-endian hosts keeps the file
// format fixed; all current targets are little-endian so this is a no-op.
void write_f64(std::ostream& os, const double* p, size_t n) {
  static_assert(sizeof(double) == 8);
  os.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(8 * n));
}

void read_f64(std::istream& is, double* p, size_t n) {
  is.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(8 * n));
  if (!is) throw ParseError("checkpoint: truncated parameter payload");
}

}  // namespace

void MixerModel::save(const std::string& path) const {
  nlohmann::json j;
  j["input_dim"] = cfg_.input_dim;
  j["hidden_dims"] = cfg_.hidden_dims;
  j["d_e"] = cfg_.d_e;
  j["d_r"] = cfg_.d_r;
  j["num_ids"] = cfg_.num_ids;
  j["seed"] = cfg_.seed;
  j["trained_epochs"] = trained_epochs;
  const std::string header = j.dump();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("checkpoint: cannot open " + path + " for write");
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, static_cast<uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Tensor* t : parameters()) write_f64(os, t->data(), t->size());
  if (!os) throw ParseError("checkpoint: write failed for " + path);
}

MixerModel MixerModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("checkpoint: cannot open " + path);
  char magic[6];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError("checkpoint: bad magic in " + path);
  const uint32_t len = read_u32(is);
  std::string header(len, '\0');
  is.read(header.data(), len);
  if (!is) throw ParseError("checkpoint: truncated config in " + path);

  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: config JSON: ") + e.what());
  }
  ModelConfig cfg;
  try {
    cfg.input_dim = j.at("input_dim").get<int>();
    cfg.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    cfg.d_e = j.at("d_e").get<int>();
    cfg.d_r = j.at("d_r").get<int>();
    cfg.num_ids = j.at("num_ids").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: config field: ") + e.what());
  }
  MixerModel m(cfg);
  m.trained_epochs = j.value("trained_epochs", 0);
  for (Tensor* t : m.parameters()) read_f64(is, t->data(), t->size());
  char extra;
  if (is.read(&extra, 1))
    throw ParseError("checkpoint: trailing bytes in " + path);
  return m;
}

}  // namespace mixer
