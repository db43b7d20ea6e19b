#include "mixer/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

#include "mixer/error.hpp"

namespace mixer {

void LossWeights::validate() const {
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError(std::string("loss weights: ") + name +
                        " must be finite and nonnegative");
  };
  check(lambda_m, "lambda_m");
  check(lambda_o, "lambda_o");
  check(lambda_f, "lambda_f");
  check(margin_alpha, "margin_alpha");
  check(cc_margin_rho, "cc_margin_rho");
}

int double_label(int y, Modality m, int num_ids) {
  if (y < 0 || y >= num_ids)
    throw LabelError("double_label: id " + std::to_string(y) + " outside [0," +
                     std::to_string(num_ids) + ")");
  return 2 * y + (m == Modality::V ? 0 : 1);
}

std::vector<int> double_labels(const std::vector<int>& y,
                               const std::vector<Modality>& m, int num_ids) {
  if (y.size() != m.size())
    throw DimensionError("double_labels: label/modality length mismatch");
  std::vector<int> out(y.size());
  for (size_t i = 0; i < y.size(); ++i)
    out[i] = double_label(y[i], m[i], num_ids);
  return out;
}

int loss_orth(Tape& t, int z_r, int z_e, bool raw) {
  if (t.value(z_r).cols() != t.value(z_e).cols())
    throw DimensionError("loss_orth: d_r != d_e");
  const int cos = cosine_rows(t, z_r, z_e);
  return raw ? t.mean_all(cos) : t.mean_all(t.mul(cos, cos));
}

int loss_cc(Tape& t, int z, const std::vector<int>& labels, double rho) {
  const Tensor& vz = t.value(z);
  const int B = vz.rows();
  const int d = vz.cols();
  if (B == 0) throw DimensionError("loss_cc: empty batch");
  if (static_cast<int>(labels.size()) != B)
    throw DimensionError("loss_cc: label count mismatch");

  std::map<int, std::vector<int>> by_class;
  for (int i = 0; i < B; ++i) by_class[labels[i]].push_back(i);
  const int K = static_cast<int>(by_class.size());

  Tensor selector(K, B);  // selector row k averages class k's samples
  std::vector<int> class_of(B);
  int k = 0;
  for (const auto& [label, members] : by_class) {
    for (int i : members) {
      selector.at(k, i) = 1.0 / members.size();
      class_of[i] = k;
    }
    ++k;
  }
  const int centers = t.matmul(t.leaf(std::move(selector), false), z);

  const int diff = t.sub(z, t.gather_rows(centers, class_of));
  // mean_all averages over B*d entries; the pull term wants the per-sample
  // squared norm mean, hence the factor d
  const int pull = t.scale(t.mean_all(t.mul(diff, diff)), d);
  if (K < 2) return pull;

  std::vector<int> js, ks;
  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b) {
      js.push_back(a);
      ks.push_back(b);
    }
  const int pair_diff = t.sub(t.gather_rows(centers, js), t.gather_rows(centers, ks));
  const int dist = t.sqrt(t.row_sum(t.mul(pair_diff, pair_diff)));
  const int hinge = t.relu(t.add_const(t.scale(dist, -1.0), rho));
  const int push = t.mean_all(t.mul(hinge, hinge));
  return t.add(pull, push);
}

int loss_yme(Tape& t, int z_e, const std::vector<int>& y, int cls_w, int cls_b,
             double rho) {
  const int ce = t.softmax_cross_entropy(linear(t, z_e, cls_w, cls_b), y);
  return t.add(ce, loss_cc(t, z_e, y, rho));
}

int loss_m(Tape& t, int z_e, const std::vector<Modality>& m, int cls_w,
           int cls_b, double grl_coeff) {
  std::vector<int> labels(m.size());
  for (size_t i = 0; i < m.size(); ++i) labels[i] = static_cast<int>(m[i]);
  const int reversed = t.grad_reverse(z_e, grl_coeff);
  return t.softmax_cross_entropy(linear(t, reversed, cls_w, cls_b), labels);
}

int loss_ymr(Tape& t, int z_r, const std::vector<int>& y,
             const std::vector<Modality>& m, int num_ids, int cls_w, int cls_b,
             double rho) {
  const std::vector<int> yd = double_labels(y, m, num_ids);
  const int ce = t.softmax_cross_entropy(linear(t, z_r, cls_w, cls_b), yd);
  return t.add(ce, loss_cc(t, z_r, yd, rho));
}

int loss_fusion(Tape& t, int z_e, int z_f, const std::vector<int>& y,
                const std::vector<Modality>& m, double alpha) {
  const int B = t.value(z_e).rows();
  if (static_cast<int>(y.size()) != B || static_cast<int>(m.size()) != B)
    throw DimensionError("loss_fusion: label/modality length mismatch");
  if (B == 0) return t.leaf(Tensor(1, 1), false);

  const int nf = t.l2_normalize_rows(z_f);
  const int ne = t.l2_normalize_rows(z_e);
  const int df = t.add_const(t.scale(t.matmul(nf, t.transpose(nf)), -1.0), 1.0);
  const int de = t.add_const(t.scale(t.matmul(ne, t.transpose(ne)), -1.0), 1.0);
  const Tensor& vdf = t.value(df);
  const Tensor& vde = t.value(de);

  // batch-hard picks on detached distances; ties resolve to the lowest index
  std::vector<std::pair<int, int>> fp, fn, ep, en;
  for (int j = 0; j < B; ++j) {
    int p = -1, n = -1, pc = -1, nc = -1;
    for (int i = 0; i < B; ++i) {
      if (i == j) continue;
      const bool same_id = y[i] == y[j];
      if (m[i] == m[j]) {
        if (same_id && (p < 0 || vdf.at(j, i) > vdf.at(j, p))) p = i;
        if (!same_id && (n < 0 || vdf.at(j, i) < vdf.at(j, n))) n = i;
      } else {
        if (same_id && (pc < 0 || vde.at(j, i) > vde.at(j, pc))) pc = i;
        if (!same_id && (nc < 0 || vde.at(j, i) < vde.at(j, nc))) nc = i;
      }
    }
    if (p < 0 || n < 0 || pc < 0 || nc < 0) continue;
    fp.emplace_back(j, p);
    fn.emplace_back(j, n);
    ep.emplace_back(j, pc);
    en.emplace_back(j, nc);
  }
  if (fp.empty()) return t.leaf(Tensor(1, 1), false);

  const int term1 = t.relu(t.add_const(
      t.sub(t.gather_entries(df, fp), t.gather_entries(de, en)), alpha));
  const int term2 = t.relu(t.add_const(
      t.sub(t.gather_entries(de, ep), t.gather_entries(df, fn)), alpha));
  return t.add(t.mean_all(term1), t.mean_all(term2));
}

TotalLoss loss_total(Tape& t, const LossInputs& in, const LossWeights& w) {
  w.validate();
  TotalLoss out;

  const int yme = loss_yme(t, in.z_e, in.y, in.cls_e_w, in.cls_e_b,
                           w.cc_margin_rho);
  out.breakdown.l_yme = t.value(yme).at(0, 0);
  int total = yme;

  if (in.enable_ymr) {
    const int ymr = loss_ymr(t, in.z_r, in.y, in.mods, in.num_ids, in.cls_r_w,
                             in.cls_r_b, w.cc_margin_rho);
    out.breakdown.l_ymr = t.value(ymr).at(0, 0);
    total = t.add(total, ymr);
  }

  if (w.lambda_m > 0.0) {
    const int lm = loss_m(t, in.z_e, in.mods, in.cls_m_w, in.cls_m_b,
                          in.grl_coeff);
    out.breakdown.l_m = t.value(lm).at(0, 0);
    total = t.add(total, t.scale(lm, w.lambda_m));
  }

  if (w.lambda_o > 0.0) {
    const int lo = loss_orth(t, in.z_r, in.z_e, w.orth_raw);
    out.breakdown.l_o = t.value(lo).at(0, 0);
    total = t.add(total, t.scale(lo, w.lambda_o));
  }

  if (w.lambda_f > 0.0) {
    const int zf = t.concat_cols(t.l2_normalize_rows(in.z_e),
                                 t.l2_normalize_rows(in.z_r));
    const int lf = loss_fusion(t, in.z_e, zf, in.y, in.mods, w.margin_alpha);
    out.breakdown.l_f = t.value(lf).at(0, 0);
    total = t.add(total, t.scale(lf, w.lambda_f));
  }

  out.node = total;
  out.breakdown.total = t.value(total).at(0, 0);
  return out;
}

}  // namespace mixer
