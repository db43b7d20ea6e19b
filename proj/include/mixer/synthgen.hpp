#ifndef MIXER_SYNTHGEN_HPP_
#define MIXER_SYNTHGEN_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mixer/data.hpp"

namespace mixer {

struct GenConfig {
  int num_ids = 50;
  int k_s = 8;  // shared latent dim
  int k_m = 4;  // modality-specific latent dim
  int input_dim = 64;
  int cams_v = 3;
  int cams_i = 2;
  // bumped to 2 when 1, otherwise a (id,camera) cell cannot hold both splits
  int samples_per_id_per_cam = 20;
  double noise_sigma = 0.1;
  double camera_bias_sigma = 0.05;
  uint64_t seed = 0;
  double test_fraction = 0.5;

  void validate() const;
  int num_cams() const { return cams_v + cams_i; }
};

struct Dataset {
  std::vector<Sample> samples;
  GenConfig config;
  std::vector<Modality> camera_modality;  // indexed by camera id

  // every id present in both modalities in both splits, labels dense
  void validate() const;
  std::vector<Sample> split(Split s) const;
};

// Features are tanh(P_m concat(u_y, v_{y,m})) + camera bias + noise, with all
// latents drawn from per-entity derived seeds: regenerating identity 7 never
// depends on identity 6's stream. Cameras 0..cams_v-1 are V, the rest I.
// Within each (id, camera) cell the last n_test samples are the test split,
// n_test = clamp(round(n * test_fraction), 1, n-1).
Dataset generate(const GenConfig& cfg);

struct OracleReport {
  double acc_v = 0.0;
  double acc_i = 0.0;
  double acc_overall = 0.0;
  int num_test = 0;
};

// Nearest train-centroid classification of test features within each
// modality; certifies the dataset is learnable before any training.
OracleReport oracle_check(const Dataset& ds);

// CSV with header id,modality,camera,split,f0..f{D-1} plus a sidecar
// <path>.json holding GenConfig. Round-trip is value-exact.
void save(const Dataset& ds, const std::string& path);
Dataset load(const std::string& path);

}  // namespace mixer

#endif  // MIXER_SYNTHGEN_HPP_
