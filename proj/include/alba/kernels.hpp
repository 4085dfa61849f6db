#pragma once

#include <cstddef>
#include <string>

namespace alba::kern {

// Dense f32 inner loops. One table per implementation; the active table is
// chosen once at runtime (AVX2 when the CPU supports it, scalar otherwise)
// and can be pinned via force() or the ALBA_KERNELS env var.
//
// Matrix conventions, all row-major:
//   matmul_nn      c[m,n]  = a[m,k] @ b[k,n]
//   matmul_nn_acc  c[m,n] += a[m,k] @ b[k,n]
//   matmul_nt_acc  c[m,n] += a[m,k] @ b[n,k]^T
//   matmul_tn_acc  c[m,n] += a[k,m]^T @ b[k,n]
struct KernelsF32 {
  const char* name;

  void (*add)(const float* a, const float* b, float* y, std::size_t n);
  void (*sub)(const float* a, const float* b, float* y, std::size_t n);
  void (*mul)(const float* a, const float* b, float* y, std::size_t n);
  void (*mul_acc)(const float* a, const float* b, float* y, std::size_t n);  // y += a⊙b
  void (*scale)(const float* x, float c, float* y, std::size_t n);           // y = c·x
  void (*add_scalar)(const float* x, float c, float* y, std::size_t n);      // y = x + c
  void (*axpy)(float a, const float* x, float* y, std::size_t n);            // y += a·x

  float (*dot)(const float* a, const float* b, std::size_t n);
  float (*sum)(const float* x, std::size_t n);
  float (*max_val)(const float* x, std::size_t n);  // n >= 1

  void (*relu)(const float* x, float* y, std::size_t n);
  void (*relu_bwd)(const float* x, const float* up, float* gx, std::size_t n);  // gx += up·[x>0]

  void (*matmul_nn)(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n);
  void (*matmul_nn_acc)(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n);
  void (*matmul_nt_acc)(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n);
  void (*matmul_tn_acc)(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n);

  // Fused Adam update over one parameter buffer; bc1/bc2 are the bias
  // corrections 1-beta^t. Arranged as plain mul+add so scalar and AVX2
  // agree bit-for-bit.
  void (*adam_update)(float* p, const float* g, float* m, float* v, std::size_t n,
                      float lr, float beta1, float beta2, float eps, float bc1, float bc2);
};

const KernelsF32& scalar_kernels();
const KernelsF32* avx2_kernels();  // nullptr when not compiled for this target
bool cpu_has_avx2();

// Active table: env override > AVX2 when available > scalar.
const KernelsF32& active();
// Test hook; name is "scalar" or "avx2". Throws ConfigError on unknown or
// unavailable names. Not meant to be called while jobs are running.
void force(const std::string& name);

// Typed entry points for the templated tensor core. float routes through the
// dispatch table; double runs the scalar reference implementations (the
// double path only exists for gradient checks).
template <class T>
struct Ops;

template <>
struct Ops<float> {
  static void add(const float* a, const float* b, float* y, std::size_t n) { active().add(a, b, y, n); }
  static void sub(const float* a, const float* b, float* y, std::size_t n) { active().sub(a, b, y, n); }
  static void mul(const float* a, const float* b, float* y, std::size_t n) { active().mul(a, b, y, n); }
  static void mul_acc(const float* a, const float* b, float* y, std::size_t n) { active().mul_acc(a, b, y, n); }
  static void scale(const float* x, float c, float* y, std::size_t n) { active().scale(x, c, y, n); }
  static void add_scalar(const float* x, float c, float* y, std::size_t n) { active().add_scalar(x, c, y, n); }
  static void axpy(float a, const float* x, float* y, std::size_t n) { active().axpy(a, x, y, n); }
  static float dot(const float* a, const float* b, std::size_t n) { return active().dot(a, b, n); }
  static float sum(const float* x, std::size_t n) { return active().sum(x, n); }
  static float max_val(const float* x, std::size_t n) { return active().max_val(x, n); }
  static void relu(const float* x, float* y, std::size_t n) { active().relu(x, y, n); }
  static void relu_bwd(const float* x, const float* up, float* gx, std::size_t n) { active().relu_bwd(x, up, gx, n); }
  static void matmul_nn(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) { active().matmul_nn(a, b, c, m, k, n); }
  static void matmul_nn_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) { active().matmul_nn_acc(a, b, c, m, k, n); }
  static void matmul_nt_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) { active().matmul_nt_acc(a, b, c, m, k, n); }
  static void matmul_tn_acc(const float* a, const float* b, float* c, std::size_t m, std::size_t k, std::size_t n) { active().matmul_tn_acc(a, b, c, m, k, n); }
  static void adam_update(float* p, const float* g, float* m, float* v, std::size_t n,
                          float lr, float b1, float b2, float eps, float bc1, float bc2) {
    active().adam_update(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2);
  }
};

template <>
struct Ops<double> {
  static void add(const double* a, const double* b, double* y, std::size_t n);
  static void sub(const double* a, const double* b, double* y, std::size_t n);
  static void mul(const double* a, const double* b, double* y, std::size_t n);
  static void mul_acc(const double* a, const double* b, double* y, std::size_t n);
  static void scale(const double* x, double c, double* y, std::size_t n);
  static void add_scalar(const double* x, double c, double* y, std::size_t n);
  static void axpy(double a, const double* x, double* y, std::size_t n);
  static double dot(const double* a, const double* b, std::size_t n);
  static double sum(const double* x, std::size_t n);
  static double max_val(const double* x, std::size_t n);
  static void relu(const double* x, double* y, std::size_t n);
  static void relu_bwd(const double* x, const double* up, double* gx, std::size_t n);
  static void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  static void matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  static void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  static void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  static void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                          double lr, double b1, double b2, double eps, double bc1, double bc2);
};

}  // namespace alba::kern
