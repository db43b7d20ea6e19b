#include "mixer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>

#include "mixer/kernels.hpp"

namespace mixer {

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr))
    throw ConfigError("train: base_lr must be positive");
  if (warmup_epochs < 0) throw ConfigError("train: warmup_epochs must be >= 0");
  if (p_ids < 2) throw ConfigError("train: p_ids must be >= 2");
  if (k_per_modality < 2)
    throw ConfigError("train: k_per_modality must be >= 2");
  for (const auto& [epoch, factor] : decay_epochs)
    if (epoch < 0 || !(factor > 0.0))
      throw ConfigError("train: decay thresholds need epoch >= 0, factor > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0))
    throw ConfigError("train: adam parameters out of range");
  if (!(grl_coeff >= 0.0)) throw ConfigError("train: grl_coeff must be >= 0");
  weights.validate();
}

OptimizerState OptimizerState::for_model(MixerModel& model) {
  OptimizerState s;
  for (Tensor* p : model.parameters()) {
    s.m.push_back(Tensor(p->rows(), p->cols()));
    s.v.push_back(Tensor(p->rows(), p->cols()));
  }
  return s;
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < cfg.warmup_epochs)
    return cfg.base_lr * (epoch + 1) / cfg.warmup_epochs;
  double factor = 1.0;
  int latest = -1;
  for (const auto& [threshold, f] : cfg.decay_epochs)
    if (epoch >= threshold && threshold > latest) {
      latest = threshold;
      factor = f;
    }
  return cfg.base_lr * factor;
}

std::vector<int> sample_batch(const std::vector<Sample>& pool, int p_ids,
                              int k, Rng& rng) {
  // per-id sample indices, v[0]=V, v[1]=I
  struct Buckets {
    std::vector<int> v[2];
  };
  std::map<int, Buckets> by_id;
  for (size_t i = 0; i < pool.size(); ++i)
    by_id[pool[i].id].v[static_cast<int>(pool[i].modality)].push_back(
        static_cast<int>(i));

  std::vector<int> eligible;
  for (const auto& [id, buckets] : by_id) {
    if (buckets.v[0].empty() || buckets.v[1].empty())
      throw SamplingError("sample_batch: identity " + std::to_string(id) +
                          " is missing one modality");
    eligible.push_back(id);
  }
  const int p = std::min<int>(p_ids, static_cast<int>(eligible.size()));
  if (p < 2)
    throw SamplingError("sample_batch: need at least 2 eligible identities");

  for (int j = 0; j < p; ++j) {
    const int swap_at =
        j + rng.uniform_int(static_cast<int>(eligible.size()) - j);
    std::swap(eligible[j], eligible[swap_at]);
  }

  std::vector<int> batch;
  batch.reserve(static_cast<size_t>(p) * 2 * k);
  for (int j = 0; j < p; ++j) {
    for (int m = 0; m < 2; ++m) {
      std::vector<int> bucket = by_id[eligible[j]].v[m];
      if (static_cast<int>(bucket.size()) >= k) {
        for (int s = 0; s < k; ++s) {
          const int swap_at =
              s + rng.uniform_int(static_cast<int>(bucket.size()) - s);
          std::swap(bucket[s], bucket[swap_at]);
          batch.push_back(bucket[s]);
        }
      } else {
        for (int s = 0; s < k; ++s)
          batch.push_back(
              bucket[rng.uniform_int(static_cast<int>(bucket.size()))]);
      }
    }
  }
  return batch;
}

void adam_step(std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, OptimizerState& state,
               double lr, const TrainConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw DimensionError("adam_step: parameter/gradient/state count mismatch");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, state.step);
  for (size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]))
      throw DimensionError("adam_step: gradient shape mismatch");
    kernels::adam_update(params[i]->data(), state.m[i].data(),
                         state.v[i].data(), grads[i]->data(),
                         params[i]->size(), lr, cfg.adam_beta1, cfg.adam_beta2,
                         cfg.adam_eps, bc1, bc2);
  }
}

namespace {

constexpr uint64_t tag_train_stream = 101;

void check_finite(const LossBreakdown& b, int epoch) {
  const std::pair<const char*, double> parts[] = {
      {"l_yme", b.l_yme}, {"l_ymr", b.l_ymr}, {"l_m", b.l_m},
      {"l_o", b.l_o},     {"l_f", b.l_f},     {"total", b.total},
  };
  for (const auto& [name, v] : parts)
    if (!std::isfinite(v))
      throw NumericError(std::string("train: ") + name +
                         " became non-finite at epoch " +
                         std::to_string(epoch));
}

}  // namespace

std::vector<EpochStats> train(MixerModel& model, const Dataset& ds,
                              const TrainConfig& cfg) {
  cfg.validate();
  const std::vector<Sample> pool = ds.split(Split::train);
  if (pool.empty()) throw SamplingError("train: empty training split");

  const int input_dim = model.config().input_dim;
  OptimizerState state = OptimizerState::for_model(model);
  Rng rng(derive_seed(cfg.seed, tag_train_stream, 0));

  std::vector<EpochStats> history;
  if (cfg.epochs == 0) return history;

  const int iterations = std::max<int>(
      1, static_cast<int>(pool.size()) / cfg.batch_size());
  const int start_epoch = model.trained_epochs;

  for (int e = 0; e < cfg.epochs; ++e) {
    const int epoch = start_epoch + e;
    const double lr = lr_at(epoch, cfg);
    LossBreakdown sum;
    for (int it = 0; it < iterations; ++it) {
      const std::vector<int> idx =
          sample_batch(pool, cfg.p_ids, cfg.k_per_modality, rng);
      const int B = static_cast<int>(idx.size());
      Tensor x(B, input_dim);
      std::vector<int> y(B);
      std::vector<Modality> mods(B);
      for (int r = 0; r < B; ++r) {
        const Sample& s = pool[idx[r]];
        if (static_cast<int>(s.features.size()) != input_dim)
          throw DimensionError("train: sample feature length mismatch");
        std::memcpy(x.row(r), s.features.data(), sizeof(double) * input_dim);
        y[r] = s.id;
        mods[r] = s.modality;
      }

      Tape tape;
      const MixerModel::Bound bound = model.bind(tape, true);
      const MixerModel::Forward fwd = model.forward(tape, bound, x, mods);

      LossInputs in;
      in.z_e = fwd.z_e;
      in.z_r = fwd.z_r;
      in.cls_e_w = bound.cls_e_w;
      in.cls_e_b = bound.cls_e_b;
      in.cls_r_w = bound.cls_r_w;
      in.cls_r_b = bound.cls_r_b;
      in.cls_m_w = bound.cls_m_w;
      in.cls_m_b = bound.cls_m_b;
      in.y = y;
      in.mods = mods;
      in.num_ids = model.config().num_ids;
      in.grl_coeff = cfg.grl_coeff;
      in.enable_ymr = cfg.enable_ymr;

      const TotalLoss loss = loss_total(tape, in, cfg.weights);
      check_finite(loss.breakdown, epoch);
      tape.backward(loss.node);

      std::vector<Tensor*> params = model.parameters();
      std::vector<const Tensor*> grads;
      grads.reserve(bound.all.size());
      for (int nid : bound.all) grads.push_back(&tape.grad(nid));
      adam_step(params, grads, state, lr, cfg);
      for (const Tensor* p : params)
        if (!p->all_finite())
          throw NumericError("train: parameters non-finite at epoch " +
                             std::to_string(epoch));

      sum.l_yme += loss.breakdown.l_yme;
      sum.l_ymr += loss.breakdown.l_ymr;
      sum.l_m += loss.breakdown.l_m;
      sum.l_o += loss.breakdown.l_o;
      sum.l_f += loss.breakdown.l_f;
      sum.total += loss.breakdown.total;
    }
    EpochStats st;
    st.epoch = epoch;
    st.lr = lr;
    st.mean.l_yme = sum.l_yme / iterations;
    st.mean.l_ymr = sum.l_ymr / iterations;
    st.mean.l_m = sum.l_m / iterations;
    st.mean.l_o = sum.l_o / iterations;
    st.mean.l_f = sum.l_f / iterations;
    st.mean.total = sum.total / iterations;
    history.push_back(st);
  }
  model.trained_epochs = start_epoch + cfg.epochs;
  return history;
}

void write_history(const std::vector<EpochStats>& history,
                   const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("history: cannot open " + path + " for write");
  os << "epoch,lr,l_yme,l_ymr,l_m,l_o,l_f,total\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << ',' << buf;
  };
  for (const EpochStats& st : history) {
    os << st.epoch;
    put(st.lr);
    put(st.mean.l_yme);
    put(st.mean.l_ymr);
    put(st.mean.l_m);
    put(st.mean.l_o);
    put(st.mean.l_f);
    put(st.mean.total);
    os << "\n";
  }
}

}  // namespace mixer
