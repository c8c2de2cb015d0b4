#pragma once

#include <cstddef>

// Row-major double GEMM kernels used by the dense/conv layers. Fixed
// accumulation order, no FP reassociation, so results are reproducible
// run to run.
namespace sv::nn::detail {

// C[M,N] (+)= A[M,K] * B[K,N]
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C, bool accumulate);

// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C, bool accumulate);

// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B,
             double* C, bool accumulate);

}  // namespace sv::nn::detail
