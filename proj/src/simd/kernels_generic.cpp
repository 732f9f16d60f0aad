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

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "criticsearch/simd/kernels.hpp"
#include "exp_constants.hpp"

namespace criticsearch::simd::generic {

void add(double* dst, const double* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void axpy(double* dst, double a, const double* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += a * src[i];
}

void scale(double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double max(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double exp(double x) {
    using namespace detail;
    if (x < kExpUnderflow) return 0.0;
    if (x > kExpOverflow) return std::numeric_limits<double>::infinity();
    const double n = std::nearbyint(x * kLog2e);
    double r = std::fma(-n, kLn2Hi, x);
    r = std::fma(-n, kLn2Lo, r);
    double p = kExpCoeffs[0];
    for (int k = 1; k < 14; ++k) p = std::fma(p, r, kExpCoeffs[k]);
    const auto magic_bits = std::bit_cast<std::int64_t>(kRoundMagic);
    const auto biased = std::bit_cast<std::int64_t>(n + kRoundMagic) - magic_bits + 1023;
    const double two_n = std::bit_cast<double>(static_cast<std::uint64_t>(biased) << 52);
    return p * two_n;
}

double exp_shifted(const double* x, double shift, double* out, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = exp(x[i] - shift);
        s += out[i];
    }
    return s;
}

}  // namespace criticsearch::simd::generic
