#ifndef MIXER_KERNELS_HPP_
#define MIXER_KERNELS_HPP_

#include <cstddef>

// Arithmetic inner loops shared by the autodiff tape, the optimizer and the
// retrieval evaluator. Every kernel has a scalar reference implementation and
// an AVX2 variant; the active variant is chosen once at startup from cpuid
// (override with MIXER_KERNELS=scalar|avx2 or force_backend). Scalar and AVX2
// results may differ in the last bits because vector lanes reassociate sums;
// the equivalence tests bound that difference.
namespace mixer::kernels {

enum class Backend { scalar, avx2 };

Backend active_backend();
void force_backend(Backend b);
const char* backend_name();
bool avx2_available();

// sum_i a[i]*b[i]
double dot(const double* a, const double* b, size_t n);
// y[i] += alpha * x[i]
void axpy(double* y, double alpha, const double* x, size_t n);
// out may alias a or b
void add(double* out, const double* a, const double* b, size_t n);
void sub(double* out, const double* a, const double* b, size_t n);
void mul(double* out, const double* a, const double* b, size_t n);
void scale(double* out, const double* a, double c, size_t n);
void relu(double* out, const double* a, size_t n);
// dx[i] += g[i] * (y[i] > 0), y is the relu output
void relu_backward(double* dx, const double* y, const double* g, size_t n);
// dx[i] += g[i] * (1 - y[i]^2), y is the tanh output
void tanh_backward(double* dx, const double* y, const double* g, size_t n);
double sum(const double* a, size_t n);

// Bias-corrected Adam step, in place. bc1 = 1-beta1^t, bc2 = 1-beta2^t.
void adam_update(double* p, double* m, double* v, const double* g, size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2);

// c[MxN] += a[MxK] * b[KxN]
void gemm_nn(double* c, const double* a, const double* b, size_t m, size_t k,
             size_t n);
// c[MxN] += a[MxK] * b[NxK]^T
void gemm_nt(double* c, const double* a, const double* b, size_t m, size_t k,
             size_t n);
// c[MxN] += a[KxM]^T * b[KxN]
void gemm_tn(double* c, const double* a, const double* b, size_t m, size_t k,
             size_t n);

// Scalar reference implementations, exposed for the equivalence tests.
namespace scalar {
double dot(const double* a, const double* b, size_t n);
void axpy(double* y, double alpha, const double* x, size_t n);
void add(double* out, const double* a, const double* b, size_t n);
void sub(double* out, const double* a, const double* b, size_t n);
void mul(double* out, const double* a, const double* b, size_t n);
void scale(double* out, const double* a, double c, size_t n);
void relu(double* out, const double* a, size_t n);
void relu_backward(double* dx, const double* y, const double* g, size_t n);
void tanh_backward(double* dx, const double* y, const double* g, size_t n);
double sum(const double* a, size_t n);
void adam_update(double* p, double* m, double* v, const double* g, size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2);
}  // namespace scalar

#ifdef MIXER_HAVE_AVX2
namespace avx2 {
double dot(const double* a, const double* b, size_t n);
void axpy(double* y, double alpha, const double* x, size_t n);
void add(double* out, const double* a, const double* b, size_t n);
void sub(double* out, const double* a, const double* b, size_t n);
void mul(double* out, const double* a, const double* b, size_t n);
void scale(double* out, const double* a, double c, size_t n);
void relu(double* out, const double* a, size_t n);
void relu_backward(double* dx, const double* y, const double* g, size_t n);
void tanh_backward(double* dx, const double* y, const double* g, size_t n);
double sum(const double* a, size_t n);
void adam_update(double* p, double* m, double* v, const double* g, size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1,
                 double bc2);
}  // namespace avx2
#endif

}  // namespace mixer::kernels

#endif  // MIXER_KERNELS_HPP_
