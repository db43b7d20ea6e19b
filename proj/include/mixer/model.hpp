#ifndef MIXER_MODEL_HPP_
#define MIXER_MODEL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mixer/autodiff.hpp"
#include "mixer/data.hpp"
#include "mixer/tensor.hpp"

namespace mixer {

struct ModelConfig {
  int input_dim = 64;
  std::vector<int> hidden_dims = {128, 128};
  int d_e = 32;
  int d_r = 32;
  int num_ids = 50;
  uint64_t seed = 0;

  // width of the representation the heads consume
  int shared_width() const {
    return hidden_dims.empty() ? input_dim : hidden_dims.back();
  }
  void validate() const;
};

struct EmbeddingRecord {
  std::vector<double> z_e;
  std::vector<double> z_r;
  std::vector<double> z_f;  // concat of the L2-normalized parts, norm sqrt(2)
  int id = 0;
  Modality modality = Modality::V;
  int camera = 0;
};

// concat(l2_normalize(z_e), l2_normalize(z_r))
std::vector<double> fuse(const std::vector<double>& z_e,
                         const std::vector<double>& z_r);

// Tanh MLP backbone shared by both modalities, one erased head, two
// modality-specific related heads of identical shape but disjoint storage,
// and three classifier heads. Parameter count:
//   sum_l (in_l*out_l + out_l)              backbone
//   + s*d_e + d_e                           erased head
//   + 2*(s*d_r + d_r)                       related heads (V and I)
//   + d_e*C + C + d_r*2C + 2C + d_e*2 + 2   classifiers, C = num_ids
// with s = shared_width.
class MixerModel {
 public:
  explicit MixerModel(const ModelConfig& cfg);

  // Node ids of every parameter registered on one tape.
  struct Bound {
    std::vector<int> backbone_w, backbone_b;
    int fs_w = -1, fs_b = -1;
    int fv_w = -1, fv_b = -1;
    int fi_w = -1, fi_b = -1;
    int cls_e_w = -1, cls_e_b = -1;
    int cls_r_w = -1, cls_r_b = -1;
    int cls_m_w = -1, cls_m_b = -1;
    std::vector<int> all;  // declaration order, matches parameters()
  };

  struct Forward {
    int z = -1;    // [B x shared]
    int z_e = -1;  // [B x d_e]
    int z_r = -1;  // [B x d_r]
  };

  // Registers parameters as tape leaves. Call once per tape.
  Bound bind(Tape& t, bool requires_grad) const;

  // Row i of z_r comes from the V head when mods[i]==V, else the I head.
  // A single-modality batch never touches the other head's parameters.
  Forward forward(Tape& t, const Bound& b, const Tensor& x,
                  const std::vector<Modality>& mods) const;

  std::vector<EmbeddingRecord> embed_dataset(
      const std::vector<Sample>& samples) const;

  // Mutable views in declaration order; the order is the checkpoint layout.
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  size_t parameter_count() const;

  const ModelConfig& config() const { return cfg_; }

  int trained_epochs = 0;  // persisted in the checkpoint for resume

  void save(const std::string& path) const;
  static MixerModel load(const std::string& path);

 private:
  MixerModel() = default;
  void init_params();

  ModelConfig cfg_;
  std::vector<Tensor> backbone_w_, backbone_b_;
  Tensor fs_w_, fs_b_;
  Tensor fv_w_, fv_b_;
  Tensor fi_w_, fi_b_;
  Tensor cls_e_w_, cls_e_b_;
  Tensor cls_r_w_, cls_r_b_;
  Tensor cls_m_w_, cls_m_b_;
};

}  // namespace mixer

#endif  // MIXER_MODEL_HPP_
