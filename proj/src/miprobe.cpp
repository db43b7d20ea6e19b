#include "mixer/miprobe.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "mixer/autodiff.hpp"
#include "mixer/error.hpp"
#include "mixer/kernels.hpp"
#include "mixer/tensor.hpp"

namespace mixer {

JointTable::JointTable(std::vector<std::string> names, std::vector<int> cards)
    : names_(std::move(names)), cards_(std::move(cards)) {
  if (names_.size() != cards_.size())
    throw DimensionError("joint table: name/cardinality count mismatch");
  if (cards_.size() > 4)
    throw DimensionError("joint table: at most 4 variables");
  size_t total = 1;
  for (int c : cards_) {
    if (c < 1) throw DimensionError("joint table: cardinality must be >= 1");
    total *= static_cast<size_t>(c);
  }
  strides_.assign(cards_.size(), 1);
  for (int i = static_cast<int>(cards_.size()) - 2; i >= 0; --i)
    strides_[i] = strides_[i + 1] * cards_[i + 1];
  probs_.assign(total, 0.0);
}

double& JointTable::at(const std::vector<int>& index) {
  if (index.size() != cards_.size())
    throw DimensionError("joint table: index arity mismatch");
  size_t off = 0;
  for (size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= cards_[i])
      throw DimensionError("joint table: index out of range");
    off += static_cast<size_t>(index[i]) * strides_[i];
  }
  return probs_[off];
}

double JointTable::at(const std::vector<int>& index) const {
  return const_cast<JointTable*>(this)->at(index);
}

void JointTable::validate() const {
  double sum = 0.0;
  for (double p : probs_) {
    if (p < 0.0) throw ContractError("joint table: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw ContractError("joint table: probabilities sum to " +
                        std::to_string(sum));
}

void JointTable::normalize() {
  const double sum = kernels::sum(probs_.data(), probs_.size());
  if (sum <= 0.0) throw ContractError("joint table: cannot normalize zero mass");
  for (double& p : probs_) p /= sum;
}

JointTable JointTable::marginal(const std::vector<int>& vars) const {
  std::set<int> seen;
  for (int v : vars) {
    if (v < 0 || v >= num_vars())
      throw DimensionError("marginal: variable index out of range");
    if (!seen.insert(v).second)
      throw DimensionError("marginal: repeated variable");
  }
  std::vector<std::string> names;
  std::vector<int> cards;
  for (int v : vars) {
    names.push_back(names_[v]);
    cards.push_back(cards_[v]);
  }
  JointTable out(std::move(names), std::move(cards));

  std::vector<int> index(cards_.size(), 0);
  for (size_t cell = 0; cell < probs_.size(); ++cell) {
    size_t off = 0;
    for (size_t k = 0; k < vars.size(); ++k)
      off += static_cast<size_t>(index[vars[k]]) * out.strides_[k];
    out.probs_[off] += probs_[cell];
    for (int i = static_cast<int>(index.size()) - 1; i >= 0; --i) {
      if (++index[i] < cards_[i]) break;
      index[i] = 0;
    }
  }
  return out;
}

JointTable JointTable::random(const std::vector<int>& cards, Rng& rng) {
  std::vector<std::string> names;
  for (size_t i = 0; i < cards.size(); ++i)
    names.push_back("v" + std::to_string(i));
  JointTable t(std::move(names), cards);
  // exponential draws normalized = flat Dirichlet over the simplex
  for (double& p : t.probs_) p = -std::log(1.0 - rng.uniform());
  t.normalize();
  return t;
}

double entropy(const JointTable& t, const std::vector<int>& vars) {
  const JointTable m = t.marginal(vars);
  double h = 0.0;
  for (double p : m.probs())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

namespace {

std::vector<int> join_disjoint(const std::vector<int>& a,
                               const std::vector<int>& b, const char* who) {
  std::vector<int> u = a;
  for (int v : b) {
    if (std::find(a.begin(), a.end(), v) != a.end())
      throw DimensionError(std::string(who) + ": variable sets overlap");
    u.push_back(v);
  }
  return u;
}

}  // namespace

double mutual_info(const JointTable& t, const std::vector<int>& A,
                   const std::vector<int>& B) {
  const std::vector<int> AB = join_disjoint(A, B, "mutual_info");
  return entropy(t, A) + entropy(t, B) - entropy(t, AB);
}

double cond_mutual_info(const JointTable& t, const std::vector<int>& A,
                        const std::vector<int>& B, const std::vector<int>& C) {
  const std::vector<int> AC = join_disjoint(A, C, "cond_mutual_info");
  const std::vector<int> BC = join_disjoint(B, C, "cond_mutual_info");
  const std::vector<int> AB = join_disjoint(A, B, "cond_mutual_info");
  const std::vector<int> ABC = join_disjoint(AB, C, "cond_mutual_info");
  return entropy(t, AC) + entropy(t, BC) - entropy(t, ABC) - entropy(t, C);
}

double interaction_info(const JointTable& t, const std::vector<int>& A,
                        const std::vector<int>& B, const std::vector<int>& C) {
  const std::vector<int> AB = join_disjoint(A, B, "interaction_info");
  const std::vector<int> AC = join_disjoint(A, C, "interaction_info");
  const std::vector<int> BC = join_disjoint(B, C, "interaction_info");
  const std::vector<int> ABC = join_disjoint(AB, C, "interaction_info");
  return entropy(t, A) + entropy(t, B) + entropy(t, C) - entropy(t, AB) -
         entropy(t, AC) - entropy(t, BC) + entropy(t, ABC);
}

namespace {

enum SeedTag : uint64_t {
  tag_thm1 = 11,
  tag_thm2 = 12,
  tag_prop1 = 13,
  tag_props = 14,
  tag_probe_split = 15,
};

int rand_card(Rng& rng) { return 2 + rng.uniform_int(3); }  // 2..4

CheckReport make_report(const std::string& name, int trials, double violation,
                        double tol) {
  return {name, trials, violation, violation < tol};
}

}  // namespace

std::vector<CheckReport> check_theorem1(int trials, uint64_t seed) {
  Rng rng(derive_seed(seed, tag_thm1, 0));
  const std::vector<int> ZE = {0}, ZR = {1}, Y = {2}, ZEZR = {0, 1};

  double v_general = 0.0;
  for (int i = 0; i < trials; ++i) {
    const JointTable t =
        JointTable::random({rand_card(rng), rand_card(rng), rand_card(rng)},
                           rng);
    const double lhs = mutual_info(t, ZEZR, Y);
    const double rhs = mutual_info(t, ZE, Y) + mutual_info(t, ZR, Y) -
                       interaction_info(t, ZE, ZR, Y);
    v_general = std::max(v_general, std::abs(lhs - rhs));
  }

  // independent parts with the label a function of the first part only:
  // here the interaction term provably vanishes and additivity is exact
  double v_additive = 0.0;
  for (int i = 0; i < trials; ++i) {
    const int a = rand_card(rng), b = rand_card(rng), c = rand_card(rng);
    const JointTable pa = JointTable::random({a}, rng);
    const JointTable pb = JointTable::random({b}, rng);
    std::vector<int> f(a);
    for (int& fi : f) fi = rng.uniform_int(c);
    JointTable t({"ze", "zr", "y"}, {a, b, c});
    std::vector<int> idx(3);
    for (int ia = 0; ia < a; ++ia)
      for (int ib = 0; ib < b; ++ib) {
        idx = {ia, ib, f[ia]};
        size_t off = static_cast<size_t>(ia) * b * c +
                     static_cast<size_t>(ib) * c + f[ia];
        t.probs()[off] = pa.probs()[ia] * pb.probs()[ib];
      }
    const double gap = mutual_info(t, ZEZR, Y) - mutual_info(t, ZE, Y) -
                       mutual_info(t, ZR, Y);
    v_additive = std::max(v_additive, std::abs(gap));
  }

  // label = parity of two independent fair bits: each part alone carries
  // nothing, jointly they determine the label; the additivity gap is ln 2
  JointTable x({"ze", "zr", "y"}, {2, 2, 2});
  for (int ia = 0; ia < 2; ++ia)
    for (int ib = 0; ib < 2; ++ib)
      x.probs()[static_cast<size_t>(ia) * 4 + static_cast<size_t>(ib) * 2 +
                (ia ^ ib)] = 0.25;
  const double ln2 = std::log(2.0);
  const double v_xor_gap = std::abs(
      (mutual_info(x, ZEZR, Y) - mutual_info(x, ZE, Y) - mutual_info(x, ZR, Y)) -
      ln2);
  const double v_xor_ii = std::abs(interaction_info(x, ZE, ZR, Y) + ln2);

  return {
      make_report("theorem1_chain_identity", trials, v_general, 1e-9),
      make_report("theorem1_additivity_product", trials, v_additive, 1e-9),
      make_report("theorem1_xor_gap_ln2", 1, v_xor_gap, 1e-9),
      make_report("theorem1_xor_interaction_neg_ln2", 1, v_xor_ii, 1e-9),
  };
}

std::vector<CheckReport> check_theorem2(int trials, uint64_t seed) {
  Rng rng(derive_seed(seed, tag_thm2, 0));
  const std::vector<int> Z = {0}, Y = {1}, M = {2};

  double v_identity = 0.0, v_direct = 0.0;
  for (int i = 0; i < trials; ++i) {
    const int n_x = 4 + rng.uniform_int(3);
    const int n_z = 2 + rng.uniform_int(3);
    const int n_y = 2 + rng.uniform_int(2);
    const int n_m = 2;
    std::vector<int> g(n_x), fy(n_z), fm(n_z);
    for (int& v : g) v = rng.uniform_int(n_z);
    for (int& v : fy) v = rng.uniform_int(n_y);
    for (int& v : fm) v = rng.uniform_int(n_m);

    JointTable t({"z", "y", "m"}, {n_z, n_y, n_m});
    for (int ix = 0; ix < n_x; ++ix) {
      const int z = g[ix];
      t.probs()[static_cast<size_t>(z) * n_y * n_m +
                static_cast<size_t>(fy[z]) * n_m + fm[z]] += 1.0 / n_x;
    }

    const double cmi = cond_mutual_info(t, Z, Y, M);
    const double via_interaction =
        mutual_info(t, Z, Y) - interaction_info(t, Z, Y, M);
    v_identity = std::max(v_identity, std::abs(cmi - via_interaction));

    // direct definition, sum over cells of p log(p(z,y,m)p(m)/(p(zm)p(ym)))
    const JointTable pzm = t.marginal({0, 2});
    const JointTable pym = t.marginal({1, 2});
    const JointTable pm = t.marginal({2});
    double direct = 0.0;
    for (int z = 0; z < n_z; ++z)
      for (int y = 0; y < n_y; ++y)
        for (int m = 0; m < n_m; ++m) {
          const double p = t.probs()[static_cast<size_t>(z) * n_y * n_m +
                                     static_cast<size_t>(y) * n_m + m];
          if (p <= 0.0) continue;
          const double num = p * pm.probs()[m];
          const double den = pzm.probs()[static_cast<size_t>(z) * n_m + m] *
                             pym.probs()[static_cast<size_t>(y) * n_m + m];
          direct += p * std::log(num / den);
        }
    v_direct = std::max(v_direct, std::abs(cmi - direct));
  }

  return {
      make_report("theorem2_cmi_chain_identity", trials, v_identity, 1e-9),
      make_report("theorem2_cmi_direct_definition", trials, v_direct, 1e-9),
  };
}

std::vector<CheckReport> check_prop_cross_entropy(int trials, uint64_t seed) {
  Rng rng(derive_seed(seed, tag_prop1, 0));
  double v_identity = 0.0, v_bound = 0.0, v_equality = 0.0;
  for (int i = 0; i < trials; ++i) {
    const int n_z = rand_card(rng), n_y = rand_card(rng);
    const JointTable t = JointTable::random({n_z, n_y}, rng);
    const JointTable pz = t.marginal({0});

    // random predicted conditionals q(y|z)
    std::vector<double> q(static_cast<size_t>(n_z) * n_y);
    for (int z = 0; z < n_z; ++z) {
      double s = 0.0;
      for (int y = 0; y < n_y; ++y) {
        q[static_cast<size_t>(z) * n_y + y] = -std::log(1.0 - rng.uniform());
        s += q[static_cast<size_t>(z) * n_y + y];
      }
      for (int y = 0; y < n_y; ++y) q[static_cast<size_t>(z) * n_y + y] /= s;
    }

    double ce = 0.0, hyz = 0.0, kl = 0.0, ce_self = 0.0;
    for (int z = 0; z < n_z; ++z)
      for (int y = 0; y < n_y; ++y) {
        const double pzy = t.probs()[static_cast<size_t>(z) * n_y + y];
        if (pzy <= 0.0) continue;
        const double pyz = pzy / pz.probs()[z];
        const double qyz = q[static_cast<size_t>(z) * n_y + y];
        ce -= pzy * std::log(qyz);
        hyz -= pzy * std::log(pyz);
        kl += pzy * std::log(pyz / qyz);
        ce_self -= pzy * std::log(pyz);
      }
    v_identity = std::max(v_identity, std::abs(ce - (hyz + kl)));
    v_bound = std::max(v_bound, hyz - ce);  // must never exceed 0
    v_equality = std::max(v_equality, std::abs(ce_self - hyz));
  }
  return {
      make_report("prop1_ce_equals_h_plus_kl", trials, v_identity, 1e-9),
      make_report("prop1_ce_lower_bound", trials, std::max(v_bound, 0.0), 1e-9),
      make_report("prop1_equality_at_truth", trials, v_equality, 1e-9),
  };
}

std::vector<CheckReport> check_properties(int trials, uint64_t seed) {
  Rng rng(derive_seed(seed, tag_props, 0));
  const std::vector<int> A = {0}, B = {1}, C = {2};
  double v_p1 = 0.0, v_p2 = 0.0, v_p3 = 0.0, v_p4 = 0.0, v_p5 = 0.0;
  for (int i = 0; i < trials; ++i) {
    const JointTable t =
        JointTable::random({rand_card(rng), rand_card(rng), rand_card(rng)},
                           rng);
    v_p1 = std::max(v_p1, -mutual_info(t, A, B));
    v_p1 = std::max(v_p1, -mutual_info(t, {0, 1}, C));

    const JointTable pa = JointTable::random({rand_card(rng)}, rng);
    const JointTable pb = JointTable::random({rand_card(rng)}, rng);
    JointTable prod({"a", "b"}, {pa.cards()[0], pb.cards()[0]});
    for (int ia = 0; ia < pa.cards()[0]; ++ia)
      for (int ib = 0; ib < pb.cards()[0]; ++ib)
        prod.probs()[static_cast<size_t>(ia) * pb.cards()[0] + ib] =
            pa.probs()[ia] * pb.probs()[ib];
    v_p2 = std::max(v_p2, std::abs(mutual_info(prod, {0}, {1})));

    v_p3 = std::max(v_p3, interaction_info(t, A, B, C) - mutual_info(t, A, B));

    const double p4_lhs = mutual_info(t, {0, 2}, B);
    const double p4_rhs = mutual_info(t, A, B) + mutual_info(t, C, B) -
                          interaction_info(t, A, C, B);
    v_p4 = std::max(v_p4, std::abs(p4_lhs - p4_rhs));

    const double p5_lhs = cond_mutual_info(t, A, B, C);
    const double p5_rhs = mutual_info(t, A, B) - interaction_info(t, A, B, C);
    v_p5 = std::max(v_p5, std::abs(p5_lhs - p5_rhs));
  }
  return {
      make_report("p1_nonnegativity", trials, std::max(v_p1, 0.0), 1e-12),
      make_report("p2_independence_zero", trials, v_p2, 1e-12),
      make_report("p3_interaction_monotone", trials, std::max(v_p3, 0.0), 1e-9),
      make_report("p4_joint_decomposition", trials, v_p4, 1e-9),
      make_report("p5_conditional_decomposition", trials, v_p5, 1e-9),
  };
}

std::vector<CheckReport> run_all_checks(uint64_t seed, bool inject_fault) {
  std::vector<CheckReport> all;
  for (auto&& batch :
       {check_properties(1000, seed), check_theorem1(1000, seed),
        check_theorem2(1000, seed), check_prop_cross_entropy(1000, seed)})
    all.insert(all.end(), batch.begin(), batch.end());
  if (inject_fault) all.push_back({"injected_fault", 1, 1.0, false});
  return all;
}

void write_checks(const std::vector<CheckReport>& checks,
                  const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError("checks: cannot open " + path + " for write");
  os << "check,trials,max_violation,pass\n";
  char buf[32];
  for (const CheckReport& c : checks) {
    std::snprintf(buf, sizeof(buf), "%.17g", c.max_violation);
    os << c.name << ',' << c.trials << ',' << buf << ','
       << (c.pass ? "true" : "false") << "\n";
  }
}

ProbeReport linear_probe(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, int num_classes,
                         uint64_t seed) {
  const int N = static_cast<int>(features.size());
  if (N < 2 || labels.size() != features.size())
    throw DimensionError("linear_probe: need >= 2 labeled feature rows");
  const int d = static_cast<int>(features[0].size());
  std::vector<int> counts(num_classes, 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes)
      throw LabelError("linear_probe: label out of range");
    ++counts[y];
  }
  int present = 0;
  for (int c : counts) present += c > 0;
  if (present < 2)
    throw LabelError("linear_probe: target has a single class");

  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, tag_probe_split, 0));
  for (int j = 0; j < N - 1; ++j)
    std::swap(order[j], order[j + rng.uniform_int(N - j)]);
  const int train_n = std::clamp((N * 7) / 10, 1, N - 1);

  auto fill = [&](int from, int count) {
    Tensor x(count, d);
    std::vector<int> y(count);
    for (int r = 0; r < count; ++r) {
      const int i = order[from + r];
      if (static_cast<int>(features[i].size()) != d)
        throw DimensionError("linear_probe: ragged feature rows");
      std::copy(features[i].begin(), features[i].end(), x.row(r));
      y[r] = labels[i];
    }
    return std::make_pair(std::move(x), std::move(y));
  };
  auto [xtr, ytr] = fill(0, train_n);
  auto [xte, yte] = fill(train_n, N - train_n);

  Tensor w(d, num_classes), b(1, num_classes);
  for (int step = 0; step < 200; ++step) {
    Tape t;
    const int wn = t.leaf(w, true);
    const int bn = t.leaf(b, true);
    const int loss =
        t.softmax_cross_entropy(linear(t, t.leaf(xtr, false), wn, bn), ytr);
    t.backward(loss);
    kernels::axpy(w.data(), -0.1, t.grad(wn).data(), w.size());
    kernels::axpy(b.data(), -0.1, t.grad(bn).data(), b.size());
  }

  ProbeReport rep;
  rep.train_n = train_n;
  rep.test_n = N - train_n;
  int correct = 0;
  for (int r = 0; r < rep.test_n; ++r) {
    int best = 0;
    double best_v = -1e300;
    for (int c = 0; c < num_classes; ++c) {
      double v = b.at(0, c);
      for (int k = 0; k < d; ++k) v += xte.at(r, k) * w.at(k, c);
      if (v > best_v) {
        best_v = v;
        best = c;
      }
    }
    correct += best == yte[r];
  }
  rep.accuracy = static_cast<double>(correct) / rep.test_n;
  int max_count = 0;
  for (int c : counts) max_count = std::max(max_count, c);
  rep.chance = static_cast<double>(max_count) / N;
  return rep;
}

double binned_mi_estimate(const std::vector<std::vector<double>>& features,
                          const std::vector<int>& labels, int num_labels,
                          int bins) {
  if (bins < 2) throw ConfigError("binned_mi: bins must be >= 2");
  const int N = static_cast<int>(features.size());
  if (N < 1 || labels.size() != features.size())
    throw DimensionError("binned_mi: need labeled feature rows");
  const int d = static_cast<int>(features[0].size());

  std::vector<double> mean(d, 0.0);
  for (const auto& f : features) {
    if (static_cast<int>(f.size()) != d)
      throw DimensionError("binned_mi: ragged feature rows");
    for (int k = 0; k < d; ++k) mean[k] += f[k];
  }
  for (double& m : mean) m /= N;

  // top principal direction by power iteration on the covariance
  std::vector<double> v(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<double> u(N), w(d);
  for (int it = 0; it < 100; ++it) {
    for (int i = 0; i < N; ++i) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += (features[i][k] - mean[k]) * v[k];
      u[i] = s;
    }
    std::fill(w.begin(), w.end(), 0.0);
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < d; ++k) w[k] += u[i] * (features[i][k] - mean[k]);
    const double norm = std::sqrt(kernels::dot(w.data(), w.data(), d));
    if (norm <= 1e-300) break;  // constant features: any direction works
    for (int k = 0; k < d; ++k) v[k] = w[k] / norm;
  }

  std::vector<double> score(N);
  for (int i = 0; i < N; ++i) {
    double s = 0.0;
    for (int k = 0; k < d; ++k) s += (features[i][k] - mean[k]) * v[k];
    score[i] = s;
  }
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score[a] < score[b]; });

  JointTable t({"bin", "label"}, {bins, num_labels});
  for (int r = 0; r < N; ++r) {
    const int bin = static_cast<int>(static_cast<int64_t>(r) * bins / N);
    const int y = labels[order[r]];
    if (y < 0 || y >= num_labels)
      throw LabelError("binned_mi: label out of range");
    t.probs()[static_cast<size_t>(bin) * num_labels + y] += 1.0 / N;
  }
  return mutual_info(t, {0}, {1});
}

}  // namespace mixer
