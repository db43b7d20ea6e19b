#include "mixer/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mixer/kernels.hpp"
#include "mixer/rng.hpp"

namespace mixer {

void GenConfig::validate() const {
  if (num_ids < 2) throw ConfigError("gen: num_ids must be >= 2");
  if (cams_v < 1 || cams_i < 1)
    throw ConfigError("gen: each modality needs at least one camera");
  if (k_s < 1 || k_m < 1 || input_dim < 1)
    throw ConfigError("gen: latent and output dims must be >= 1");
  if (samples_per_id_per_cam < 1)
    throw ConfigError("gen: samples_per_id_per_cam must be >= 1");
  if (!(noise_sigma >= 0.0) || !(camera_bias_sigma >= 0.0))
    throw ConfigError("gen: sigmas must be nonnegative");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("gen: test_fraction must lie in (0,1)");
}

void Dataset::validate() const {
  if (samples.empty()) throw ConfigError("dataset: empty");
  std::set<int> ids;
  // presence[{id, modality, split}]
  std::set<std::tuple<int, int, int>> presence;
  for (const Sample& s : samples) {
    if (s.id < 0 || s.id >= config.num_ids)
      throw ConfigError("dataset: id out of range");
    if (s.camera < 0 || s.camera >= config.num_cams())
      throw ConfigError("dataset: camera out of range");
    if (camera_modality[s.camera] != s.modality)
      throw ConfigError("dataset: sample modality disagrees with its camera");
    ids.insert(s.id);
    presence.insert({s.id, static_cast<int>(s.modality),
                     static_cast<int>(s.split)});
  }
  if (static_cast<int>(ids.size()) != config.num_ids)
    throw ConfigError("dataset: ids are not dense 0..num_ids-1");
  for (int y = 0; y < config.num_ids; ++y)
    for (int m = 0; m < 2; ++m)
      for (int sp = 0; sp < 2; ++sp)
        if (!presence.count({y, m, sp}))
          throw ConfigError("dataset: id " + std::to_string(y) +
                            " missing a (modality, split) cell");
}

std::vector<Sample> Dataset::split(Split s) const {
  std::vector<Sample> out;
  for (const Sample& x : samples)
    if (x.split == s) out.push_back(x);
  return out;
}

namespace {

enum SeedTag : uint64_t {
  tag_id_shared = 1,
  tag_id_specific_v = 2,
  tag_id_specific_i = 3,
  tag_camera = 4,
  tag_projection = 5,
  tag_sample = 6,
};

uint64_t pack3(int a, int b, int c) {
  return (static_cast<uint64_t>(a) * 1000003ULL + static_cast<uint64_t>(b)) *
             1000003ULL +
         static_cast<uint64_t>(c);
}

std::vector<double> draw_normal(uint64_t seed, int n, double sigma) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = sigma * rng.normal();
  return v;
}

}  // namespace

Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  GenConfig eff = cfg;
  if (eff.samples_per_id_per_cam < 2) eff.samples_per_id_per_cam = 2;

  const int klat = eff.k_s + eff.k_m;
  const double proj_sigma = 1.0 / std::sqrt(static_cast<double>(klat));
  std::vector<std::vector<double>> proj(2);  // [modality][input_dim*klat]
  for (int m = 0; m < 2; ++m)
    proj[m] = draw_normal(derive_seed(eff.seed, tag_projection, m),
                          eff.input_dim * klat, proj_sigma);

  Dataset ds;
  ds.config = eff;
  for (int c = 0; c < eff.num_cams(); ++c)
    ds.camera_modality.push_back(c < eff.cams_v ? Modality::V : Modality::I);

  std::vector<std::vector<double>> cam_bias(eff.num_cams());
  for (int c = 0; c < eff.num_cams(); ++c)
    cam_bias[c] = draw_normal(derive_seed(eff.seed, tag_camera, c),
                              eff.input_dim, eff.camera_bias_sigma);

  const int n = eff.samples_per_id_per_cam;
  const int n_test = std::clamp(
      static_cast<int>(std::lround(n * eff.test_fraction)), 1, n - 1);

  std::vector<double> latent(klat);
  for (int y = 0; y < eff.num_ids; ++y) {
    const auto u = draw_normal(derive_seed(eff.seed, tag_id_shared, y),
                               eff.k_s, 1.0);
    const std::vector<std::vector<double>> v = {
        draw_normal(derive_seed(eff.seed, tag_id_specific_v, y), eff.k_m, 1.0),
        draw_normal(derive_seed(eff.seed, tag_id_specific_i, y), eff.k_m, 1.0),
    };
    for (int c = 0; c < eff.num_cams(); ++c) {
      const int m = static_cast<int>(ds.camera_modality[c]);
      std::copy(u.begin(), u.end(), latent.begin());
      std::copy(v[m].begin(), v[m].end(), latent.begin() + eff.k_s);
      std::vector<double> base(eff.input_dim);
      for (int d = 0; d < eff.input_dim; ++d)
        base[d] = std::tanh(kernels::dot(&proj[m][static_cast<size_t>(d) * klat],
                                         latent.data(), klat)) +
                  cam_bias[c][d];
      for (int s = 0; s < n; ++s) {
        Sample smp;
        smp.features = base;
        if (eff.noise_sigma > 0.0) {
          Rng srng(derive_seed(eff.seed, tag_sample, pack3(y, c, s)));
          for (double& f : smp.features) f += eff.noise_sigma * srng.normal();
        }
        smp.id = y;
        smp.modality = ds.camera_modality[c];
        smp.camera = c;
        smp.split = s < n - n_test ? Split::train : Split::test;
        ds.samples.push_back(std::move(smp));
      }
    }
  }
  ds.validate();
  return ds;
}

OracleReport oracle_check(const Dataset& ds) {
  const int D = ds.config.input_dim;
  // centroid[modality][id]
  std::vector<std::vector<std::vector<double>>> centroid(
      2, std::vector<std::vector<double>>(ds.config.num_ids,
                                          std::vector<double>(D, 0.0)));
  std::vector<std::vector<int>> counts(2,
                                       std::vector<int>(ds.config.num_ids, 0));
  for (const Sample& s : ds.samples) {
    if (s.split != Split::train) continue;
    const int m = static_cast<int>(s.modality);
    for (int d = 0; d < D; ++d) centroid[m][s.id][d] += s.features[d];
    ++counts[m][s.id];
  }
  for (int m = 0; m < 2; ++m)
    for (int y = 0; y < ds.config.num_ids; ++y)
      for (int d = 0; d < D; ++d)
        if (counts[m][y] > 0) centroid[m][y][d] /= counts[m][y];

  OracleReport rep;
  int correct[2] = {0, 0}, total[2] = {0, 0};
  for (const Sample& s : ds.samples) {
    if (s.split != Split::test) continue;
    const int m = static_cast<int>(s.modality);
    int best = -1;
    double best_d2 = 0.0;
    for (int y = 0; y < ds.config.num_ids; ++y) {
      if (counts[m][y] == 0) continue;
      double d2 = 0.0;
      for (int d = 0; d < D; ++d) {
        const double diff = s.features[d] - centroid[m][y][d];
        d2 += diff * diff;
      }
      if (best < 0 || d2 < best_d2) {
        best = y;
        best_d2 = d2;
      }
    }
    ++total[m];
    if (best == s.id) ++correct[m];
  }
  rep.acc_v = total[0] ? static_cast<double>(correct[0]) / total[0] : 0.0;
  rep.acc_i = total[1] ? static_cast<double>(correct[1]) / total[1] : 0.0;
  rep.num_test = total[0] + total[1];
  rep.acc_overall =
      rep.num_test
          ? static_cast<double>(correct[0] + correct[1]) / rep.num_test
          : 0.0;
  return rep;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

nlohmann::json config_json(const GenConfig& c) {
  return {
      {"num_ids", c.num_ids},
      {"k_s", c.k_s},
      {"k_m", c.k_m},
      {"input_dim", c.input_dim},
      {"cams_v", c.cams_v},
      {"cams_i", c.cams_i},
      {"samples_per_id_per_cam", c.samples_per_id_per_cam},
      {"noise_sigma", c.noise_sigma},
      {"camera_bias_sigma", c.camera_bias_sigma},
      {"seed", c.seed},
      {"test_fraction", c.test_fraction},
  };
}

GenConfig config_from_json(const nlohmann::json& j) {
  GenConfig c;
  try {
    c.num_ids = j.at("num_ids").get<int>();
    c.k_s = j.at("k_s").get<int>();
    c.k_m = j.at("k_m").get<int>();
    c.input_dim = j.at("input_dim").get<int>();
    c.cams_v = j.at("cams_v").get<int>();
    c.cams_i = j.at("cams_i").get<int>();
    c.samples_per_id_per_cam = j.at("samples_per_id_per_cam").get<int>();
    c.noise_sigma = j.at("noise_sigma").get<double>();
    c.camera_bias_sigma = j.at("camera_bias_sigma").get<double>();
    c.seed = j.at("seed").get<uint64_t>();
    c.test_fraction = j.at("test_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset config: ") + e.what());
  }
  return c;
}

}  // namespace

void save(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("dataset: cannot open " + path + " for write");
  os << "id,modality,camera,split";
  for (int d = 0; d < ds.config.input_dim; ++d) os << ",f" << d;
  os << "\n";
  for (const Sample& s : ds.samples) {
    os << s.id << ',' << modality_char(s.modality) << ',' << s.camera << ','
       << (s.split == Split::train ? "train" : "test");
    for (double f : s.features) os << ',' << fmt17(f);
    os << "\n";
  }
  if (!os) throw ParseError("dataset: write failed for " + path);

  std::ofstream js(path + ".json", std::ios::binary);
  if (!js) throw ParseError("dataset: cannot open " + path + ".json");
  js << config_json(ds.config).dump(2) << "\n";
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

int parse_int(const std::string& s, int line_no, const char* field) {
  try {
    size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("dataset: line " + std::to_string(line_no) + ": bad " +
                     field + " value '" + s + "'");
  }
}

double parse_double(const std::string& s, int line_no, const char* field) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ParseError("dataset: line " + std::to_string(line_no) + ": bad " +
                     field + " value '" + s + "'");
  }
}

}  // namespace

Dataset load(const std::string& path) {
  std::ifstream cfg_in(path + ".json", std::ios::binary);
  if (!cfg_in) throw ParseError("dataset: missing sidecar " + path + ".json");
  nlohmann::json j;
  try {
    cfg_in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset: sidecar JSON: ") + e.what());
  }

  Dataset ds;
  ds.config = config_from_json(j);
  for (int c = 0; c < ds.config.num_cams(); ++c)
    ds.camera_modality.push_back(c < ds.config.cams_v ? Modality::V
                                                      : Modality::I);

  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("dataset: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw ParseError("dataset: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const auto header = split_csv_line(line);
  const std::vector<std::string> fixed = {"id", "modality", "camera", "split"};
  if (header.size() != fixed.size() + ds.config.input_dim)
    throw ParseError("dataset: header has " + std::to_string(header.size()) +
                     " columns, expected " +
                     std::to_string(fixed.size() + ds.config.input_dim));
  for (size_t i = 0; i < fixed.size(); ++i)
    if (header[i] != fixed[i])
      throw ParseError("dataset: unknown column '" + header[i] +
                       "' where '" + fixed[i] + "' expected");
  for (int d = 0; d < ds.config.input_dim; ++d)
    if (header[fixed.size() + d] != "f" + std::to_string(d))
      throw ParseError("dataset: unknown column '" + header[fixed.size() + d] +
                       "' where 'f" + std::to_string(d) + "' expected");

  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("dataset: line " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " fields, expected " +
                       std::to_string(header.size()));
    Sample s;
    s.id = parse_int(cells[0], line_no, "id");
    if (cells[1].size() != 1)
      throw ParseError("dataset: line " + std::to_string(line_no) +
                       ": bad modality '" + cells[1] + "'");
    s.modality = modality_from_char(cells[1][0]);
    s.camera = parse_int(cells[2], line_no, "camera");
    if (cells[3] == "train")
      s.split = Split::train;
    else if (cells[3] == "test")
      s.split = Split::test;
    else
      throw ParseError("dataset: line " + std::to_string(line_no) +
                       ": bad split '" + cells[3] + "'");
    s.features.reserve(ds.config.input_dim);
    for (int d = 0; d < ds.config.input_dim; ++d)
      s.features.push_back(parse_double(cells[4 + d], line_no, "feature"));
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace mixer
