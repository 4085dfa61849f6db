#include "alba/kernels.hpp"

#include "kernels_scalar_impl.hpp"

namespace alba::kern {

const KernelsF32& scalar_kernels() {
  static const KernelsF32 table = {
      "scalar",
      detail::add<float>,
      detail::sub<float>,
      detail::mul<float>,
      detail::mul_acc<float>,
      detail::scale<float>,
      detail::add_scalar<float>,
      detail::axpy<float>,
      detail::dot<float>,
      detail::sum<float>,
      detail::max_val<float>,
      detail::relu<float>,
      detail::relu_bwd<float>,
      detail::matmul_nn<float>,
      detail::matmul_nn_acc<float>,
      detail::matmul_nt_acc<float>,
      detail::matmul_tn_acc<float>,
      detail::adam_update<float>,
  };
  return table;
}

void Ops<double>::add(const double* a, const double* b, double* y, std::size_t n) { detail::add(a, b, y, n); }
void Ops<double>::sub(const double* a, const double* b, double* y, std::size_t n) { detail::sub(a, b, y, n); }
void Ops<double>::mul(const double* a, const double* b, double* y, std::size_t n) { detail::mul(a, b, y, n); }
void Ops<double>::mul_acc(const double* a, const double* b, double* y, std::size_t n) { detail::mul_acc(a, b, y, n); }
void Ops<double>::scale(const double* x, double c, double* y, std::size_t n) { detail::scale(x, c, y, n); }
void Ops<double>::add_scalar(const double* x, double c, double* y, std::size_t n) { detail::add_scalar(x, c, y, n); }
void Ops<double>::axpy(double a, const double* x, double* y, std::size_t n) { detail::axpy(a, x, y, n); }
double Ops<double>::dot(const double* a, const double* b, std::size_t n) { return detail::dot(a, b, n); }
double Ops<double>::sum(const double* x, std::size_t n) { return detail::sum(x, n); }
double Ops<double>::max_val(const double* x, std::size_t n) { return detail::max_val(x, n); }
void Ops<double>::relu(const double* x, double* y, std::size_t n) { detail::relu(x, y, n); }
void Ops<double>::relu_bwd(const double* x, const double* up, double* gx, std::size_t n) { detail::relu_bwd(x, up, gx, n); }
void Ops<double>::matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) { detail::matmul_nn(a, b, c, m, k, n); }
void Ops<double>::matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) { detail::matmul_nn_acc(a, b, c, m, k, n); }
void Ops<double>::matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) { detail::matmul_nt_acc(a, b, c, m, k, n); }
void Ops<double>::matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) { detail::matmul_tn_acc(a, b, c, m, k, n); }
void Ops<double>::adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                              double lr, double b1, double b2, double eps, double bc1, double bc2) {
  detail::adam_update(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2);
}

}  // namespace alba::kern
