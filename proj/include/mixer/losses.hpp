#ifndef MIXER_LOSSES_HPP_
#define MIXER_LOSSES_HPP_

#include <vector>

#include "mixer/autodiff.hpp"
#include "mixer/data.hpp"

namespace mixer {

struct LossWeights {
  double lambda_m = 0.4;
  double lambda_o = 0.6;
  double lambda_f = 0.4;
  double margin_alpha = 0.3;
  double cc_margin_rho = 0.5;
  // squared-cosine orthogonality by default; raw selects the signed mean,
  // which drives anti-alignment rather than independence
  bool orth_raw = false;
  void validate() const;
};

struct LossBreakdown {
  double l_yme = 0.0;
  double l_ymr = 0.0;
  double l_m = 0.0;
  double l_o = 0.0;
  double l_f = 0.0;
  double total = 0.0;
};

// y' = 2y for V, 2y+1 for I; bijection onto [0, 2*num_ids)
int double_label(int y, Modality m, int num_ids);
std::vector<int> double_labels(const std::vector<int>& y,
                               const std::vector<Modality>& m, int num_ids);

// mean over rows of cosine(z_r_i, z_e_i)^2 (or the raw signed mean)
int loss_orth(Tape& t, int z_r, int z_e, bool raw);

// Pull samples to their batch class centers plus hinged push between center
// pairs; centers are differentiable batch means.
int loss_cc(Tape& t, int z, const std::vector<int>& labels, double rho);

int loss_yme(Tape& t, int z_e, const std::vector<int>& y, int cls_w, int cls_b,
             double rho);

// Modality confusion: the classifier sees grad_reverse(z_e), so its own
// weights get ordinary gradients while z_e receives the reversed ones.
int loss_m(Tape& t, int z_e, const std::vector<Modality>& m, int cls_w,
           int cls_b, double grl_coeff);

int loss_ymr(Tape& t, int z_r, const std::vector<int>& y,
             const std::vector<Modality>& m, int num_ids, int cls_w, int cls_b,
             double rho);

// Mixed cross-modal batch-hard triplet on fused/erased distances. Anchors
// missing a same-modality positive/negative or cross-modality
// positive/negative are skipped; no valid anchor yields constant zero.
int loss_fusion(Tape& t, int z_e, int z_f, const std::vector<int>& y,
                const std::vector<Modality>& m, double alpha);

struct LossInputs {
  int z_e = -1;
  int z_r = -1;
  int cls_e_w = -1, cls_e_b = -1;
  int cls_r_w = -1, cls_r_b = -1;
  int cls_m_w = -1, cls_m_b = -1;
  std::vector<int> y;
  std::vector<Modality> mods;
  int num_ids = 0;
  double grl_coeff = 1.0;
  // ablation switch; a disabled component is logged as 0 and not added
  bool enable_ymr = true;
};

struct TotalLoss {
  int node = -1;
  LossBreakdown breakdown;  // detached values of what total actually sums
};

TotalLoss loss_total(Tape& t, const LossInputs& in, const LossWeights& w);

}  // namespace mixer

#endif  // MIXER_LOSSES_HPP_
