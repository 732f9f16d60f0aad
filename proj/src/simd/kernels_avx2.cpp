// Copyright 2026-present the criticsearch authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Compiled with -mavx2 -mfma -ffp-contract=off. Only reached through the
// dispatch table after a CPUID check.

#include <immintrin.h>

#include <bit>
#include <cstdint>
#include <limits>

#include "criticsearch/simd/kernels.hpp"
#include "exp_constants.hpp"

namespace criticsearch::simd::avx2 {

namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d m = _mm_max_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

inline __m256d exp4(__m256d x) {
    using namespace detail;
    const __m256d under = _mm256_cmp_pd(x, _mm256_set1_pd(kExpUnderflow), _CMP_LT_OQ);
    const __m256d over = _mm256_cmp_pd(x, _mm256_set1_pd(kExpOverflow), _CMP_GT_OQ);
    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(kLog2e)),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    const __m256d neg_n = _mm256_sub_pd(_mm256_setzero_pd(), n);
    __m256d r = _mm256_fmadd_pd(neg_n, _mm256_set1_pd(kLn2Hi), x);
    r = _mm256_fmadd_pd(neg_n, _mm256_set1_pd(kLn2Lo), r);
    __m256d p = _mm256_set1_pd(kExpCoeffs[0]);
    for (int k = 1; k < 14; ++k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kExpCoeffs[k]));
    const __m256i magic_bits = _mm256_set1_epi64x(std::bit_cast<std::int64_t>(kRoundMagic));
    __m256i biased = _mm256_castpd_si256(_mm256_add_pd(n, _mm256_set1_pd(kRoundMagic)));
    biased = _mm256_add_epi64(_mm256_sub_epi64(biased, magic_bits), _mm256_set1_epi64x(1023));
    const __m256d two_n = _mm256_castsi256_pd(_mm256_slli_epi64(biased, 52));
    __m256d result = _mm256_mul_pd(p, two_n);
    result = _mm256_blendv_pd(result, _mm256_setzero_pd(), under);
    result = _mm256_blendv_pd(result, _mm256_set1_pd(std::numeric_limits<double>::infinity()), over);
    return result;
}

}  // namespace

void add(double* dst, const double* src, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), _mm256_loadu_pd(src + i)));
    }
    for (; i < n; ++i) dst[i] += src[i];
}

void axpy(double* dst, double a, const double* src, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        // mul then add, not fma: keeps each lane equal to the scalar result.
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(src + i));
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), prod));
    }
    for (; i < n; ++i) dst[i] += a * src[i];
}

void scale(double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
    for (; i < n; ++i) x[i] *= a;
}

double max(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    if (n >= 4) {
        __m256d vm = _mm256_set1_pd(m);
        for (; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        m = hmax(vm);
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    }
    double s = hsum(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double exp_shifted(const double* x, double shift, double* out, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(shift);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d e = exp4(_mm256_sub_pd(_mm256_loadu_pd(x + i), vs));
        _mm256_storeu_pd(out + i, e);
        acc = _mm256_add_pd(acc, e);
    }
    double s = hsum(acc);
    for (; i < n; ++i) {
        out[i] = generic::exp(x[i] - shift);
        s += out[i];
    }
    return s;
}

}  // namespace criticsearch::simd::avx2
