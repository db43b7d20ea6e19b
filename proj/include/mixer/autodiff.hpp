#ifndef MIXER_AUTODIFF_HPP_
#define MIXER_AUTODIFF_HPP_

#include <cstdint>
#include <utility>
#include <vector>

#include "mixer/tensor.hpp"

namespace mixer {

// Reverse-mode autodiff over 2-D double tensors. The tape is define-by-run:
// ops append nodes in creation order, so inputs always precede consumers and
// backward is a single reverse sweep. Rebuild the tape for every forward pass.
// Node ids are indices into the tape and are invalidated by clear().
class Tape {
 public:
  enum class Op : uint8_t {
    leaf,
    matmul,
    transpose,
    add,
    sub,
    mul,
    scale,
    add_const,
    tanh_fn,
    relu_fn,
    sqrt_fn,
    add_row_bias,
    l2_normalize_rows,
    row_sum,
    mean_all,
    concat_cols,
    concat_rows,
    gather_rows,
    gather_entries,
    softmax_cross_entropy,
    grad_reverse,
  };

  struct Node {
    Op op = Op::leaf;
    int in0 = -1;
    int in1 = -1;
    Tensor value;
    Tensor grad;
    double c = 0.0;            // scale factor, added constant, or grl coeff
    std::vector<int> idx;      // labels, gathered rows, or (r,c) pairs flattened
    Tensor aux;                // softmax probabilities
    bool requires_grad = false;
  };

  int leaf(Tensor value, bool requires_grad);

  // c[m,n] = sum_k a[m,k] b[k,n]
  int matmul(int a, int b);
  int transpose(int a);

  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int scale(int a, double c);
  int add_const(int a, double c);
  int tanh(int a);
  int relu(int a);
  // elementwise sqrt; inputs must be >= 0
  int sqrt(int a);

  // x[B x d] + b[1 x d], b broadcast over rows
  int add_row_bias(int x, int b);

  // each row scaled to unit L2 norm; a row with norm <= 1e-12 is an error
  int l2_normalize_rows(int a);

  // [B x d] -> [B x 1]
  int row_sum(int a);
  // mean over all entries -> [1 x 1]
  int mean_all(int a);

  int concat_cols(int a, int b);
  int concat_rows(int a, int b);

  // out[k] = a[rows[k]]; backward scatter-adds, so repeated rows accumulate
  int gather_rows(int a, const std::vector<int>& rows);
  // out[k,0] = a[entries[k].first, entries[k].second]
  int gather_entries(int a, const std::vector<std::pair<int, int>>& entries);

  // mean over rows of -log softmax(logits)[label], row-max stabilized
  int softmax_cross_entropy(int logits, const std::vector<int>& labels);

  // identity forward; backward multiplies the upstream gradient by -coeff
  int grad_reverse(int a, double coeff);

  // Seeds root (must be 1x1) with gradient 1 and sweeps the tape in reverse.
  // All grads are zeroed first, so one backward per forward pass.
  void backward(int root);

  const Tensor& value(int id) const { return nodes_[check(id)].value; }
  const Tensor& grad(int id) const { return nodes_[check(id)].grad; }
  bool requires_grad(int id) const { return nodes_[check(id)].requires_grad; }

  int size() const { return static_cast<int>(nodes_.size()); }
  void clear() { nodes_.clear(); }

 private:
  int check(int id) const;
  int push(Node n);
  void backward_one(int i);

  std::vector<Node> nodes_;
};

// x[B x in] * w[in x out] + row bias b[1 x out]
int linear(Tape& t, int x, int w, int b);

// rowwise cosine of two [B x d] nodes -> [B x 1]
int cosine_rows(Tape& t, int u, int v);

}  // namespace mixer

#endif  // MIXER_AUTODIFF_HPP_
