#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the autodiff graph. Each kernel has a serial
// reference (namespace serial) and an OpenMP version; both compute every
// output element with the same summation order, so results are bitwise equal.
namespace emorank::kernels {

// Work (multiply-adds) below which the OpenMP versions stay on one thread.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

namespace serial {

// out[m,n] = a[m,k] * b[k,n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
// out[m,n] += a[m,k] * b[n,k]^T
void matmul_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n);
// out[k,n] += a[m,k]^T * b[m,n]
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n);

// "Same" 1-D convolution over time. x: [t, cin], w: [ksize, cin, cout], out: [t, cout].
void conv1d(std::span<const double> x, std::span<const double> w, std::span<double> out,
            std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize);
void conv1d_grad_input(std::span<const double> gout, std::span<const double> w, std::span<double> gx,
                       std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize);
void conv1d_grad_weight(std::span<const double> x, std::span<const double> gout, std::span<double> gw,
                        std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize);

}  // namespace serial

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_at_acc(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   std::size_t m, std::size_t k, std::size_t n);
void conv1d(std::span<const double> x, std::span<const double> w, std::span<double> out,
            std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize);
void conv1d_grad_input(std::span<const double> gout, std::span<const double> w, std::span<double> gx,
                       std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize);
void conv1d_grad_weight(std::span<const double> x, std::span<const double> gout, std::span<double> gw,
                        std::size_t t, std::size_t cin, std::size_t cout, std::size_t ksize);

}  // namespace emorank::kernels
