#include "mixer/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>

namespace mixer::kernels {

namespace scalar {

double dot(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double* y, double alpha, const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void add(double* out, const double* a, const double* b, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub(double* out, const double* a, const double* b, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul(double* out, const double* a, const double* b, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale(double* out, const double* a, double c, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void relu(double* out, const double* a, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
}

void relu_backward(double* dx, const double* y, const double* g, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (y[i] > 0.0) dx[i] += g[i];
}

void tanh_backward(double* dx, const double* y, const double* g, size_t n) {
  for (size_t i = 0; i < n; ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
}

double sum(const double* a, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void adam_update(double* p, double* m, double* v, const double* g, size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace scalar

namespace {

Backend detect_backend() {
#ifdef MIXER_HAVE_AVX2
  const char* env = std::getenv("MIXER_KERNELS");
  if (env != nullptr) {
    if (std::strcmp(env, "scalar") == 0) return Backend::scalar;
    if (std::strcmp(env, "avx2") == 0) return Backend::avx2;
  }
  if (avx2_available()) return Backend::avx2;
#endif
  return Backend::scalar;
}

Backend g_backend = detect_backend();

}  // namespace

bool avx2_available() {
#if defined(MIXER_HAVE_AVX2) && defined(__GNUC__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() { return g_backend; }

void force_backend(Backend b) {
#ifndef MIXER_HAVE_AVX2
  b = Backend::scalar;
#else
  if (b == Backend::avx2 && !avx2_available()) b = Backend::scalar;
#endif
  g_backend = b;
}

const char* backend_name() {
  return g_backend == Backend::avx2 ? "avx2" : "scalar";
}

#ifdef MIXER_HAVE_AVX2
#define MIXER_DISPATCH(fn, ...)                        \
  do {                                                 \
    if (g_backend == Backend::avx2)                    \
      return avx2::fn(__VA_ARGS__);                    \
    return scalar::fn(__VA_ARGS__);                    \
  } while (0)
#else
#define MIXER_DISPATCH(fn, ...) return scalar::fn(__VA_ARGS__)
#endif

double dot(const double* a, const double* b, size_t n) {
  MIXER_DISPATCH(dot, a, b, n);
}

void axpy(double* y, double alpha, const double* x, size_t n) {
  MIXER_DISPATCH(axpy, y, alpha, x, n);
}

void add(double* out, const double* a, const double* b, size_t n) {
  MIXER_DISPATCH(add, out, a, b, n);
}

void sub(double* out, const double* a, const double* b, size_t n) {
  MIXER_DISPATCH(sub, out, a, b, n);
}

void mul(double* out, const double* a, const double* b, size_t n) {
  MIXER_DISPATCH(mul, out, a, b, n);
}

void scale(double* out, const double* a, double c, size_t n) {
  MIXER_DISPATCH(scale, out, a, c, n);
}

void relu(double* out, const double* a, size_t n) {
  MIXER_DISPATCH(relu, out, a, n);
}

void relu_backward(double* dx, const double* y, const double* g, size_t n) {
  MIXER_DISPATCH(relu_backward, dx, y, g, n);
}

void tanh_backward(double* dx, const double* y, const double* g, size_t n) {
  MIXER_DISPATCH(tanh_backward, dx, y, g, n);
}

double sum(const double* a, size_t n) { MIXER_DISPATCH(sum, a, n); }

void adam_update(double* p, double* m, double* v, const double* g, size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2) {
  MIXER_DISPATCH(adam_update, p, m, v, g, n, lr, beta1, beta2, eps, bc1, bc2);
}

#undef MIXER_DISPATCH

void gemm_nn(double* c, const double* a, const double* b, size_t m, size_t k,
             size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (size_t p = 0; p < k; ++p) axpy(crow, arow[p], b + p * n, n);
  }
}

void gemm_nt(double* c, const double* a, const double* b, size_t m, size_t k,
             size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) crow[j] += dot(arow, b + j * k, k);
  }
}

void gemm_tn(double* c, const double* a, const double* b, size_t m, size_t k,
             size_t n) {
  for (size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (size_t i = 0; i < m; ++i) axpy(c + i * n, arow[i], brow, n);
  }
}

}  // namespace mixer::kernels
