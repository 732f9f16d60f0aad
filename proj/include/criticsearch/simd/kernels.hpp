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

#pragma once

// Dense double-precision kernels behind the policy's softmax, KL and gradient
// loops. Each kernel has a portable scalar reference (namespace generic) and,
// on x86-64, an AVX2/FMA variant. The active table is chosen once at startup
// from CPUID and can be overridden with CRITICSEARCH_ISA=generic|avx2 or
// select_isa().

#include <cstddef>
#include <span>
#include <string_view>

namespace criticsearch::simd {

enum class Isa { Generic, Avx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
    // dst[i] += src[i]
    void (*add)(double* dst, const double* src, std::size_t n);
    // dst[i] += a * src[i]
    void (*axpy)(double* dst, double a, const double* src, std::size_t n);
    // x[i] *= a
    void (*scale)(double* x, double a, std::size_t n);
    double (*max)(const double* x, std::size_t n);
    double (*dot)(const double* a, const double* b, std::size_t n);
    // out[i] = exp(x[i] - shift); returns the sum of out.
    double (*exp_shifted)(const double* x, double shift, double* out, std::size_t n);
};

namespace generic {
void add(double* dst, const double* src, std::size_t n);
void axpy(double* dst, double a, const double* src, std::size_t n);
void scale(double* x, double a, std::size_t n);
double max(const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double exp_shifted(const double* x, double shift, double* out, std::size_t n);
// Scalar exp with the same polynomial and rounding steps as the vector path.
double exp(double x);
}  // namespace generic

#if defined(CRITICSEARCH_HAVE_AVX2)
namespace avx2 {
void add(double* dst, const double* src, std::size_t n);
void axpy(double* dst, double a, const double* src, std::size_t n);
void scale(double* x, double a, std::size_t n);
double max(const double* x, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
double exp_shifted(const double* x, double shift, double* out, std::size_t n);
}  // namespace avx2
#endif

bool cpu_supports(Isa isa);

// Best ISA that is both compiled in and supported by this CPU.
Isa detect_isa();

// Currently active ISA.
Isa active_isa();

// Switches the active table. Returns false (and changes nothing) when the
// ISA is unavailable. Not thread-safe against concurrent kernel calls.
bool select_isa(Isa isa);

const KernelTable& kernels();
const KernelTable& kernels_for(Isa isa);

// Convenience wrappers over the active table.
inline void add(std::span<double> dst, std::span<const double> src) {
    kernels().add(dst.data(), src.data(), dst.size());
}
inline void axpy(std::span<double> dst, double a, std::span<const double> src) {
    kernels().axpy(dst.data(), a, src.data(), dst.size());
}
inline void scale(std::span<double> x, double a) { kernels().scale(x.data(), a, x.size()); }
inline double max(std::span<const double> x) { return kernels().max(x.data(), x.size()); }
inline double dot(std::span<const double> a, std::span<const double> b) {
    return kernels().dot(a.data(), b.data(), a.size());
}
inline double exp_shifted(std::span<const double> x, double shift, std::span<double> out) {
    return kernels().exp_shifted(x.data(), shift, out.data(), x.size());
}

}  // namespace criticsearch::simd
