#include "gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace sv::nn::detail {

namespace {

constexpr std::size_t kBlockN = 512;
constexpr std::size_t kBlockK = 512;

}  // namespace

void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C, bool accumulate) {
  if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
  for (std::size_t jc = 0; jc < N; jc += kBlockN) {
    const std::size_t je = std::min(jc + kBlockN, N);
    for (std::size_t kc = 0; kc < K; kc += kBlockK) {
      const std::size_t ke = std::min(kc + kBlockK, K);
      std::size_t i = 0;
      for (; i + 4 <= M; i += 4) {
        double* c0 = C + (i + 0) * N;
        double* c1 = C + (i + 1) * N;
        double* c2 = C + (i + 2) * N;
        double* c3 = C + (i + 3) * N;
        for (std::size_t k = kc; k < ke; ++k) {
          const double a0 = A[(i + 0) * K + k];
          const double a1 = A[(i + 1) * K + k];
          const double a2 = A[(i + 2) * K + k];
          const double a3 = A[(i + 3) * K + k];
          const double* b = B + k * N;
          for (std::size_t j = jc; j < je; ++j) {
            const double bj = b[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      }
      for (; i < M; ++i) {
        double* c = C + i * N;
        for (std::size_t k = kc; k < ke; ++k) {
          const double a = A[i * K + k];
          const double* b = B + k * N;
          for (std::size_t j = jc; j < je; ++j) c[j] += a * b[j];
        }
      }
    }
  }
}

void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C, bool accumulate) {
  // Dot-product form; eight independent accumulators per dot keep the sum
  // order fixed while still vectorizing.
  for (std::size_t i = 0; i < M; ++i) {
    const double* a = A + i * K;
    std::size_t j = 0;
    for (; j + 2 <= N; j += 2) {
      const double* b0 = B + (j + 0) * K;
      const double* b1 = B + (j + 1) * K;
      double p0[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      double p1[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      std::size_t k = 0;
      for (; k + 8 <= K; k += 8) {
        for (int u = 0; u < 8; ++u) {
          p0[u] += a[k + u] * b0[k + u];
          p1[u] += a[k + u] * b1[k + u];
        }
      }
      for (; k < K; ++k) {
        p0[0] += a[k] * b0[k];
        p1[0] += a[k] * b1[k];
      }
      const double d0 = ((p0[0] + p0[1]) + (p0[2] + p0[3])) + ((p0[4] + p0[5]) + (p0[6] + p0[7]));
      const double d1 = ((p1[0] + p1[1]) + (p1[2] + p1[3])) + ((p1[4] + p1[5]) + (p1[6] + p1[7]));
      if (accumulate) {
        C[i * N + j + 0] += d0;
        C[i * N + j + 1] += d1;
      } else {
        C[i * N + j + 0] = d0;
        C[i * N + j + 1] = d1;
      }
    }
    for (; j < N; ++j) {
      const double* b = B + j * K;
      double p[8] = {0, 0, 0, 0, 0, 0, 0, 0};
      std::size_t k = 0;
      for (; k + 8 <= K; k += 8)
        for (int u = 0; u < 8; ++u) p[u] += a[k + u] * b[k + u];
      for (; k < K; ++k) p[0] += a[k] * b[k];
      const double d = ((p[0] + p[1]) + (p[2] + p[3])) + ((p[4] + p[5]) + (p[6] + p[7]));
      if (accumulate)
        C[i * N + j] += d;
      else
        C[i * N + j] = d;
    }
  }
}

void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C, bool accumulate) {
  if (!accumulate) std::memset(C, 0, M * N * sizeof(double));
  for (std::size_t jc = 0; jc < N; jc += kBlockN) {
    const std::size_t je = std::min(jc + kBlockN, N);
    for (std::size_t kc = 0; kc < K; kc += kBlockK) {
      const std::size_t ke = std::min(kc + kBlockK, K);
      std::size_t i = 0;
      for (; i + 4 <= M; i += 4) {
        double* c0 = C + (i + 0) * N;
        double* c1 = C + (i + 1) * N;
        double* c2 = C + (i + 2) * N;
        double* c3 = C + (i + 3) * N;
        for (std::size_t k = kc; k < ke; ++k) {
          const double a0 = A[k * M + i + 0];
          const double a1 = A[k * M + i + 1];
          const double a2 = A[k * M + i + 2];
          const double a3 = A[k * M + i + 3];
          const double* b = B + k * N;
          for (std::size_t j = jc; j < je; ++j) {
            const double bj = b[j];
            c0[j] += a0 * bj;
            c1[j] += a1 * bj;
            c2[j] += a2 * bj;
            c3[j] += a3 * bj;
          }
        }
      }
      for (; i < M; ++i) {
        double* c = C + i * N;
        for (std::size_t k = kc; k < ke; ++k) {
          const double a = A[k * M + i];
          const double* b = B + k * N;
          for (std::size_t j = jc; j < je; ++j) c[j] += a * b[j];
        }
      }
    }
  }
}

}  // namespace sv::nn::detail
