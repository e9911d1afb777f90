#pragma once

// Row-major sgemm wrappers. Backed by OpenBLAS when PGAN_WITH_BLAS is set,
// otherwise by plain loop kernels.

namespace pgan::detail {

// C[m,n] = A[m,k] . B[k,n] + beta*C
void sgemm_nn(int m, int k, int n, const float* a, const float* b, float* c, float beta = 0.0f);
// C[m,n] = A[m,k] . B[n,k]^T + beta*C
void sgemm_nt(int m, int k, int n, const float* a, const float* b, float* c, float beta = 0.0f);
// C[m,n] = A[k,m]^T . B[k,n] + beta*C
void sgemm_tn(int m, int k, int n, const float* a, const float* b, float* c, float beta = 0.0f);

}  // namespace pgan::detail
