#include "mixer/autodiff.hpp"

#include <cmath>
#include <string>

#include "mixer/error.hpp"
#include "mixer/kernels.hpp"

namespace mixer {

namespace {

std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

int Tape::check(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw ContractError("tape: node id " + std::to_string(id) +
                        " out of range");
  return id;
}

int Tape::push(Node n) {
  n.grad = Tensor(n.value.rows(), n.value.cols());
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

int Tape::matmul(int a, int b) {
  const Tensor& va = nodes_[check(a)].value;
  const Tensor& vb = nodes_[check(b)].value;
  if (va.cols() != vb.rows())
    throw DimensionError("matmul: " + shape_str(va) + " * " + shape_str(vb));
  Node n;
  n.op = Op::matmul;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor(va.rows(), vb.cols());
  kernels::gemm_nn(n.value.data(), va.data(), vb.data(), va.rows(), va.cols(),
                   vb.cols());
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

int Tape::transpose(int a) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::transpose;
  n.in0 = a;
  n.value = Tensor(va.cols(), va.rows());
  for (int r = 0; r < va.rows(); ++r)
    for (int c = 0; c < va.cols(); ++c) n.value.at(c, r) = va.at(r, c);
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Tensor& va = nodes_[check(a)].value;
  const Tensor& vb = nodes_[check(b)].value;
  if (!va.same_shape(vb))
    throw DimensionError("add: " + shape_str(va) + " vs " + shape_str(vb));
  Node n;
  n.op = Op::add;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor(va.rows(), va.cols());
  kernels::add(n.value.data(), va.data(), vb.data(), va.size());
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

int Tape::sub(int a, int b) {
  const Tensor& va = nodes_[check(a)].value;
  const Tensor& vb = nodes_[check(b)].value;
  if (!va.same_shape(vb))
    throw DimensionError("sub: " + shape_str(va) + " vs " + shape_str(vb));
  Node n;
  n.op = Op::sub;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor(va.rows(), va.cols());
  kernels::sub(n.value.data(), va.data(), vb.data(), va.size());
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

int Tape::mul(int a, int b) {
  const Tensor& va = nodes_[check(a)].value;
  const Tensor& vb = nodes_[check(b)].value;
  if (!va.same_shape(vb))
    throw DimensionError("mul: " + shape_str(va) + " vs " + shape_str(vb));
  Node n;
  n.op = Op::mul;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor(va.rows(), va.cols());
  kernels::mul(n.value.data(), va.data(), vb.data(), va.size());
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

int Tape::scale(int a, double c) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::scale;
  n.in0 = a;
  n.c = c;
  n.value = Tensor(va.rows(), va.cols());
  kernels::scale(n.value.data(), va.data(), c, va.size());
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::add_const(int a, double c) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::add_const;
  n.in0 = a;
  n.c = c;
  n.value = va;
  for (size_t i = 0; i < n.value.size(); ++i) n.value.data()[i] += c;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::tanh(int a) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::tanh_fn;
  n.in0 = a;
  n.value = Tensor(va.rows(), va.cols());
  for (size_t i = 0; i < va.size(); ++i)
    n.value.data()[i] = std::tanh(va.data()[i]);
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::relu(int a) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::relu_fn;
  n.in0 = a;
  n.value = Tensor(va.rows(), va.cols());
  kernels::relu(n.value.data(), va.data(), va.size());
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::sqrt(int a) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::sqrt_fn;
  n.in0 = a;
  n.value = Tensor(va.rows(), va.cols());
  for (size_t i = 0; i < va.size(); ++i) {
    const double x = va.data()[i];
    if (x < 0.0) throw NumericError("sqrt: negative input");
    n.value.data()[i] = std::sqrt(x);
  }
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::add_row_bias(int x, int b) {
  const Tensor& vx = nodes_[check(x)].value;
  const Tensor& vb = nodes_[check(b)].value;
  if (vb.rows() != 1 || vb.cols() != vx.cols())
    throw DimensionError("add_row_bias: " + shape_str(vx) + " + " +
                         shape_str(vb));
  Node n;
  n.op = Op::add_row_bias;
  n.in0 = x;
  n.in1 = b;
  n.value = Tensor(vx.rows(), vx.cols());
  for (int r = 0; r < vx.rows(); ++r)
    kernels::add(n.value.row(r), vx.row(r), vb.data(), vx.cols());
  n.requires_grad = nodes_[x].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

int Tape::l2_normalize_rows(int a) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::l2_normalize_rows;
  n.in0 = a;
  n.value = Tensor(va.rows(), va.cols());
  n.aux = Tensor(va.rows(), 1);  // row norms, reused in backward
  for (int r = 0; r < va.rows(); ++r) {
    const double norm =
        std::sqrt(kernels::dot(va.row(r), va.row(r), va.cols()));
    if (norm <= 1e-12)
      throw DegenerateVectorError("l2_normalize_rows: row " +
                                  std::to_string(r) + " has near-zero norm");
    n.aux.at(r, 0) = norm;
    kernels::scale(n.value.row(r), va.row(r), 1.0 / norm, va.cols());
  }
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::row_sum(int a) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::row_sum;
  n.in0 = a;
  n.value = Tensor(va.rows(), 1);
  for (int r = 0; r < va.rows(); ++r)
    n.value.at(r, 0) = kernels::sum(va.row(r), va.cols());
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::mean_all(int a) {
  const Tensor& va = nodes_[check(a)].value;
  if (va.size() == 0) throw DimensionError("mean_all: empty tensor");
  Node n;
  n.op = Op::mean_all;
  n.in0 = a;
  n.value = Tensor(1, 1);
  n.value.at(0, 0) = kernels::sum(va.data(), va.size()) /
                     static_cast<double>(va.size());
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::concat_cols(int a, int b) {
  const Tensor& va = nodes_[check(a)].value;
  const Tensor& vb = nodes_[check(b)].value;
  if (va.rows() != vb.rows())
    throw DimensionError("concat_cols: " + shape_str(va) + " | " +
                         shape_str(vb));
  Node n;
  n.op = Op::concat_cols;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor(va.rows(), va.cols() + vb.cols());
  for (int r = 0; r < va.rows(); ++r) {
    double* out = n.value.row(r);
    for (int c = 0; c < va.cols(); ++c) out[c] = va.at(r, c);
    for (int c = 0; c < vb.cols(); ++c) out[va.cols() + c] = vb.at(r, c);
  }
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

int Tape::concat_rows(int a, int b) {
  const Tensor& va = nodes_[check(a)].value;
  const Tensor& vb = nodes_[check(b)].value;
  if (va.cols() != vb.cols())
    throw DimensionError("concat_rows: " + shape_str(va) + " / " +
                         shape_str(vb));
  Node n;
  n.op = Op::concat_rows;
  n.in0 = a;
  n.in1 = b;
  n.value = Tensor(va.rows() + vb.rows(), va.cols());
  for (int r = 0; r < va.rows(); ++r)
    for (int c = 0; c < va.cols(); ++c) n.value.at(r, c) = va.at(r, c);
  for (int r = 0; r < vb.rows(); ++r)
    for (int c = 0; c < vb.cols(); ++c)
      n.value.at(va.rows() + r, c) = vb.at(r, c);
  n.requires_grad = nodes_[a].requires_grad || nodes_[b].requires_grad;
  return push(std::move(n));
}

int Tape::gather_rows(int a, const std::vector<int>& rows) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::gather_rows;
  n.in0 = a;
  n.idx = rows;
  n.value = Tensor(static_cast<int>(rows.size()), va.cols());
  for (size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= va.rows())
      throw DimensionError("gather_rows: row " + std::to_string(rows[k]) +
                           " out of range");
    for (int c = 0; c < va.cols(); ++c)
      n.value.at(static_cast<int>(k), c) = va.at(rows[k], c);
  }
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::gather_entries(int a,
                         const std::vector<std::pair<int, int>>& entries) {
  const Tensor& va = nodes_[check(a)].value;
  Node n;
  n.op = Op::gather_entries;
  n.in0 = a;
  n.idx.reserve(entries.size() * 2);
  n.value = Tensor(static_cast<int>(entries.size()), 1);
  for (size_t k = 0; k < entries.size(); ++k) {
    const auto [r, c] = entries[k];
    if (r < 0 || r >= va.rows() || c < 0 || c >= va.cols())
      throw DimensionError("gather_entries: (" + std::to_string(r) + "," +
                           std::to_string(c) + ") out of range");
    n.idx.push_back(r);
    n.idx.push_back(c);
    n.value.at(static_cast<int>(k), 0) = va.at(r, c);
  }
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

int Tape::softmax_cross_entropy(int logits, const std::vector<int>& labels) {
  const Tensor& vl = nodes_[check(logits)].value;
  const int B = vl.rows();
  const int C = vl.cols();
  if (static_cast<int>(labels.size()) != B)
    throw DimensionError("softmax_cross_entropy: " + std::to_string(B) +
                         " rows vs " + std::to_string(labels.size()) +
                         " labels");
  if (B == 0 || C == 0)
    throw DimensionError("softmax_cross_entropy: empty logits");
  Node n;
  n.op = Op::softmax_cross_entropy;
  n.in0 = logits;
  n.idx.assign(labels.begin(), labels.end());
  n.aux = Tensor(B, C);
  double total = 0.0;
  for (int r = 0; r < B; ++r) {
    const int y = labels[r];
    if (y < 0 || y >= C)
      throw LabelError("softmax_cross_entropy: label " + std::to_string(y) +
                       " outside [0," + std::to_string(C) + ") at row " +
                       std::to_string(r));
    double mx = vl.at(r, 0);
    for (int c = 1; c < C; ++c) mx = std::max(mx, vl.at(r, c));
    double denom = 0.0;
    for (int c = 0; c < C; ++c) {
      const double e = std::exp(vl.at(r, c) - mx);
      n.aux.at(r, c) = e;
      denom += e;
    }
    for (int c = 0; c < C; ++c) n.aux.at(r, c) /= denom;
    total += std::log(denom) - (vl.at(r, y) - mx);
  }
  n.value = Tensor(1, 1);
  n.value.at(0, 0) = total / B;
  n.requires_grad = nodes_[logits].requires_grad;
  return push(std::move(n));
}

int Tape::grad_reverse(int a, double coeff) {
  if (coeff < 0.0) throw ContractError("grad_reverse: negative coeff");
  Node n;
  n.op = Op::grad_reverse;
  n.in0 = a;
  n.c = coeff;
  n.value = nodes_[check(a)].value;
  n.requires_grad = nodes_[a].requires_grad;
  return push(std::move(n));
}

void Tape::backward(int root) {
  const Node& r = nodes_[check(root)];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw ContractError("backward: root must be 1x1, got " +
                        shape_str(r.value));
  for (Node& n : nodes_) n.grad.fill(0.0);
  if (!r.requires_grad) return;  // constant graph, nothing to do
  nodes_[root].grad.at(0, 0) = 1.0;
  for (int i = root; i >= 0; --i) {
    if (!nodes_[i].requires_grad || nodes_[i].op == Op::leaf) continue;
    backward_one(i);
  }
}

void Tape::backward_one(int i) {
  Node& n = nodes_[i];
  const Tensor& g = n.grad;
  switch (n.op) {
    case Op::leaf:
      break;
    case Op::matmul: {
      Node& a = nodes_[n.in0];
      Node& b = nodes_[n.in1];
      if (a.requires_grad)
        kernels::gemm_nt(a.grad.data(), g.data(), b.value.data(), g.rows(),
                         g.cols(), b.value.rows());
      if (b.requires_grad)
        kernels::gemm_tn(b.grad.data(), a.value.data(), g.data(),
                         a.value.cols(), a.value.rows(), g.cols());
      break;
    }
    case Op::transpose: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad)
        for (int r = 0; r < g.rows(); ++r)
          for (int c = 0; c < g.cols(); ++c) a.grad.at(c, r) += g.at(r, c);
      break;
    }
    case Op::add: {
      Node& a = nodes_[n.in0];
      Node& b = nodes_[n.in1];
      if (a.requires_grad) kernels::axpy(a.grad.data(), 1.0, g.data(), g.size());
      if (b.requires_grad) kernels::axpy(b.grad.data(), 1.0, g.data(), g.size());
      break;
    }
    case Op::sub: {
      Node& a = nodes_[n.in0];
      Node& b = nodes_[n.in1];
      if (a.requires_grad) kernels::axpy(a.grad.data(), 1.0, g.data(), g.size());
      if (b.requires_grad)
        kernels::axpy(b.grad.data(), -1.0, g.data(), g.size());
      break;
    }
    case Op::mul: {
      Node& a = nodes_[n.in0];
      Node& b = nodes_[n.in1];
      Tensor tmp(g.rows(), g.cols());
      if (a.requires_grad) {
        kernels::mul(tmp.data(), g.data(), b.value.data(), g.size());
        kernels::axpy(a.grad.data(), 1.0, tmp.data(), g.size());
      }
      if (b.requires_grad) {
        kernels::mul(tmp.data(), g.data(), a.value.data(), g.size());
        kernels::axpy(b.grad.data(), 1.0, tmp.data(), g.size());
      }
      break;
    }
    case Op::scale: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad) kernels::axpy(a.grad.data(), n.c, g.data(), g.size());
      break;
    }
    case Op::add_const: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad) kernels::axpy(a.grad.data(), 1.0, g.data(), g.size());
      break;
    }
    case Op::tanh_fn: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad)
        kernels::tanh_backward(a.grad.data(), n.value.data(), g.data(),
                               g.size());
      break;
    }
    case Op::relu_fn: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad)
        kernels::relu_backward(a.grad.data(), n.value.data(), g.data(),
                               g.size());
      break;
    }
    case Op::sqrt_fn: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad)
        for (size_t k = 0; k < g.size(); ++k)
          a.grad.data()[k] +=
              g.data()[k] / (2.0 * std::max(n.value.data()[k], 1e-12));
      break;
    }
    case Op::add_row_bias: {
      Node& x = nodes_[n.in0];
      Node& b = nodes_[n.in1];
      if (x.requires_grad) kernels::axpy(x.grad.data(), 1.0, g.data(), g.size());
      if (b.requires_grad)
        for (int r = 0; r < g.rows(); ++r)
          kernels::axpy(b.grad.data(), 1.0, g.row(r), g.cols());
      break;
    }
    case Op::l2_normalize_rows: {
      Node& a = nodes_[n.in0];
      if (!a.requires_grad) break;
      // d/dx (x/|x|) applied to upstream g: (g - (g.y) y) / |x|
      const int d = g.cols();
      for (int r = 0; r < g.rows(); ++r) {
        const double gy = kernels::dot(g.row(r), n.value.row(r), d);
        const double inv = 1.0 / n.aux.at(r, 0);
        for (int c = 0; c < d; ++c)
          a.grad.at(r, c) += (g.at(r, c) - gy * n.value.at(r, c)) * inv;
      }
      break;
    }
    case Op::row_sum: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad)
        for (int r = 0; r < a.value.rows(); ++r)
          for (int c = 0; c < a.value.cols(); ++c)
            a.grad.at(r, c) += g.at(r, 0);
      break;
    }
    case Op::mean_all: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad) {
        const double gv = g.at(0, 0) / static_cast<double>(a.value.size());
        for (size_t k = 0; k < a.value.size(); ++k) a.grad.data()[k] += gv;
      }
      break;
    }
    case Op::concat_cols: {
      Node& a = nodes_[n.in0];
      Node& b = nodes_[n.in1];
      const int da = a.value.cols();
      if (a.requires_grad)
        for (int r = 0; r < g.rows(); ++r)
          kernels::axpy(a.grad.row(r), 1.0, g.row(r), da);
      if (b.requires_grad)
        for (int r = 0; r < g.rows(); ++r)
          kernels::axpy(b.grad.row(r), 1.0, g.row(r) + da, b.value.cols());
      break;
    }
    case Op::concat_rows: {
      Node& a = nodes_[n.in0];
      Node& b = nodes_[n.in1];
      const int ra = a.value.rows();
      if (a.requires_grad)
        kernels::axpy(a.grad.data(), 1.0, g.data(), a.value.size());
      if (b.requires_grad)
        kernels::axpy(b.grad.data(), 1.0, g.row(ra), b.value.size());
      break;
    }
    case Op::gather_rows: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad)
        for (size_t k = 0; k < n.idx.size(); ++k)
          kernels::axpy(a.grad.row(n.idx[k]), 1.0,
                        g.row(static_cast<int>(k)), g.cols());
      break;
    }
    case Op::gather_entries: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad)
        for (size_t k = 0; k < n.idx.size() / 2; ++k)
          a.grad.at(n.idx[2 * k], n.idx[2 * k + 1]) +=
              g.at(static_cast<int>(k), 0);
      break;
    }
    case Op::softmax_cross_entropy: {
      Node& a = nodes_[n.in0];
      if (!a.requires_grad) break;
      const double gv = g.at(0, 0) / static_cast<double>(n.aux.rows());
      for (int r = 0; r < n.aux.rows(); ++r) {
        for (int c = 0; c < n.aux.cols(); ++c)
          a.grad.at(r, c) += gv * n.aux.at(r, c);
        a.grad.at(r, n.idx[r]) -= gv;
      }
      break;
    }
    case Op::grad_reverse: {
      Node& a = nodes_[n.in0];
      if (a.requires_grad)
        kernels::axpy(a.grad.data(), -n.c, g.data(), g.size());
      break;
    }
  }
}

int linear(Tape& t, int x, int w, int b) {
  return t.add_row_bias(t.matmul(x, w), b);
}

int cosine_rows(Tape& t, int u, int v) {
  return t.row_sum(t.mul(t.l2_normalize_rows(u), t.l2_normalize_rows(v)));
}

}  // namespace mixer
