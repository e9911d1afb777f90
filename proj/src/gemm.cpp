#include "gemm.hpp"

#include <cstddef>

#ifdef PGAN_WITH_BLAS
#include <cblas.h>
#endif

namespace pgan::detail {

#ifdef PGAN_WITH_BLAS

void sgemm_nn(int m, int k, int n, const float* a, const float* b, float* c, float beta) {
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0f, a, k, b, n, beta, c, n);
}

void sgemm_nt(int m, int k, int n, const float* a, const float* b, float* c, float beta) {
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, 1.0f, a, k, b, k, beta, c, n);
}

void sgemm_tn(int m, int k, int n, const float* a, const float* b, float* c, float beta) {
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, k, 1.0f, a, m, b, n, beta, c, n);
}

#else

void sgemm_nn(int m, int k, int n, const float* a, const float* b, float* c, float beta) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<size_t>(i) * n;
        if (beta == 0.0f)
            for (int j = 0; j < n; ++j) crow[j] = 0.0f;
        for (int p = 0; p < k; ++p) {
            const float av = a[static_cast<size_t>(i) * k + p];
            const float* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void sgemm_nt(int m, int k, int n, const float* a, const float* b, float* c, float beta) {
    for (int i = 0; i < m; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* brow = b + static_cast<size_t>(j) * k;
            float acc = 0.0f;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = (beta == 0.0f ? 0.0f : crow[j]) + acc;
        }
    }
}

void sgemm_tn(int m, int k, int n, const float* a, const float* b, float* c, float beta) {
    if (beta == 0.0f)
        for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) c[i] = 0.0f;
    for (int p = 0; p < k; ++p) {
        const float* arow = a + static_cast<size_t>(p) * m;
        const float* brow = b + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const float av = arow[i];
            float* crow = c + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

#endif

}  // namespace pgan::detail
