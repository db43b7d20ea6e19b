#ifndef MIXER_TRAINER_HPP_
#define MIXER_TRAINER_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mixer/losses.hpp"
#include "mixer/model.hpp"
#include "mixer/rng.hpp"
#include "mixer/synthgen.hpp"

namespace mixer {

struct TrainConfig {
  int epochs = 60;
  double base_lr = 4e-4;
  int warmup_epochs = 10;
  // (first epoch, factor); the factor of the last threshold passed replaces
  // the previous one, it does not compound
  std::vector<std::pair<int, double>> decay_epochs = {{30, 0.1}, {45, 0.01}};
  int p_ids = 10;
  int k_per_modality = 8;
  LossWeights weights;
  double grl_coeff = 1.0;
  bool enable_ymr = true;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;

  void validate() const;
  int batch_size() const { return p_ids * 2 * k_per_modality; }
};

struct OptimizerState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int step = 0;

  static OptimizerState for_model(MixerModel& model);
};

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown mean;
};

// Warmup is linear in (epoch+1)/warmup_epochs; afterwards the factor of the
// last passed decay threshold applies.
double lr_at(int epoch, const TrainConfig& cfg);

// Indices into `pool`: p_ids identities, k V then k I samples each, in id
// selection order. Identities with fewer than k samples in a modality are
// drawn with replacement; an identity is eligible only with both modalities.
std::vector<int> sample_batch(const std::vector<Sample>& pool, int p_ids,
                              int k, Rng& rng);

void adam_step(std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, OptimizerState& state,
               double lr, const TrainConfig& cfg);

// Runs cfg.epochs epochs starting at model.trained_epochs (so a resumed run
// continues the lr schedule); Adam moments always start fresh. Returns the
// per-epoch mean loss breakdown.
std::vector<EpochStats> train(MixerModel& model, const Dataset& ds,
                              const TrainConfig& cfg);

void write_history(const std::vector<EpochStats>& history,
                   const std::string& path);

}  // namespace mixer

#endif  // MIXER_TRAINER_HPP_
