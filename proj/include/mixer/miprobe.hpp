#ifndef MIXER_MIPROBE_HPP_
#define MIXER_MIPROBE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "mixer/rng.hpp"

namespace mixer {

// Exhaustive discrete joint distribution over up to 4 named variables.
// probs is row-major in variable order; all entropies are in nats.
class JointTable {
 public:
  JointTable(std::vector<std::string> names, std::vector<int> cards);

  int num_vars() const { return static_cast<int>(cards_.size()); }
  const std::vector<int>& cards() const { return cards_; }
  const std::vector<std::string>& names() const { return names_; }

  double& at(const std::vector<int>& index);
  double at(const std::vector<int>& index) const;
  std::vector<double>& probs() { return probs_; }
  const std::vector<double>& probs() const { return probs_; }

  // sum to 1 within 1e-12, no negatives
  void validate() const;
  void normalize();

  // keeps `vars` (distinct, in the given order), sums out the rest
  JointTable marginal(const std::vector<int>& vars) const;

  // Dirichlet(1) via normalized exponential draws
  static JointTable random(const std::vector<int>& cards, Rng& rng);

 private:
  std::vector<std::string> names_;
  std::vector<int> cards_;
  std::vector<int> strides_;
  std::vector<double> probs_;
};

double entropy(const JointTable& t, const std::vector<int>& vars);
// A and B must be disjoint: H(A) + H(B) - H(A u B)
double mutual_info(const JointTable& t, const std::vector<int>& A,
                   const std::vector<int>& B);
// H(A,C) + H(B,C) - H(A,B,C) - H(C)
double cond_mutual_info(const JointTable& t, const std::vector<int>& A,
                        const std::vector<int>& B, const std::vector<int>& C);
// MI(A;B) - MI(A;B|C); symmetric in its arguments, may be negative
double interaction_info(const JointTable& t, const std::vector<int>& A,
                        const std::vector<int>& B, const std::vector<int>& C);

struct CheckReport {
  std::string name;
  int trials = 0;
  double max_violation = 0.0;
  bool pass = false;
};

// Decomposition of the joint information: the chain identity holds for every
// distribution; plain additivity needs the label to depend on only one of the
// independent parts, and the XOR row records the size of the gap when it
// depends on both.
std::vector<CheckReport> check_theorem1(int trials, uint64_t seed);
// Representations built as deterministic functions of the input that
// determine both target labels; conditional MI identities and a
// direct-definition cross-check.
std::vector<CheckReport> check_theorem2(int trials, uint64_t seed);
// Cross-entropy = conditional entropy + KL, never below conditional entropy.
std::vector<CheckReport> check_prop_cross_entropy(int trials, uint64_t seed);
// Nonnegativity, independence, interaction monotonicity, chain identities.
std::vector<CheckReport> check_properties(int trials, uint64_t seed);

// Every check suite with fixed sub-seeds. inject_fault appends a failing row
// so callers can exercise their failure paths.
std::vector<CheckReport> run_all_checks(uint64_t seed, bool inject_fault);

void write_checks(const std::vector<CheckReport>& checks,
                  const std::string& path);

struct ProbeReport {
  double accuracy = 0.0;
  double chance = 0.0;  // max-class prior
  int train_n = 0;
  int test_n = 0;
};

// Fresh linear softmax classifier on frozen features: seeded 70/30 split,
// 200 full-batch gradient steps at lr 0.1.
ProbeReport linear_probe(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, int num_classes,
                         uint64_t seed);

// Quantizes the top principal direction into equal-mass bins and returns the
// discrete MI against the label. A biased diagnostic, not a training signal;
// invariant under positive feature scaling.
double binned_mi_estimate(const std::vector<std::vector<double>>& features,
                          const std::vector<int>& labels, int num_labels,
                          int bins);

}  // namespace mixer

#endif  // MIXER_MIPROBE_HPP_
