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

#include "criticsearch/simd/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace criticsearch::simd {

namespace {

constexpr KernelTable kGenericTable{
    generic::add, generic::axpy, generic::scale, generic::max, generic::dot, generic::exp_shifted,
};

#if defined(CRITICSEARCH_HAVE_AVX2)
constexpr KernelTable kAvx2Table{
    avx2::add, avx2::axpy, avx2::scale, avx2::max, avx2::dot, avx2::exp_shifted,
};
#endif

Isa initial_isa() {
    Isa isa = detect_isa();
    if (const char* forced = std::getenv("CRITICSEARCH_ISA")) {
        const std::string name(forced);
        if (name == "generic") {
            isa = Isa::Generic;
        } else if (name == "avx2" && cpu_supports(Isa::Avx2)) {
            isa = Isa::Avx2;
        }
    }
    return isa;
}

std::atomic<Isa>& current() {
    static std::atomic<Isa> isa{initial_isa()};
    return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Generic:
            return "generic";
        case Isa::Avx2:
            return "avx2";
    }
    return "unknown";
}

bool cpu_supports(Isa isa) {
    switch (isa) {
        case Isa::Generic:
            return true;
        case Isa::Avx2:
#if defined(CRITICSEARCH_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
    }
    return false;
}

Isa detect_isa() { return cpu_supports(Isa::Avx2) ? Isa::Avx2 : Isa::Generic; }

Isa active_isa() { return current().load(std::memory_order_relaxed); }

bool select_isa(Isa isa) {
    if (!cpu_supports(isa)) return false;
    current().store(isa, std::memory_order_relaxed);
    return true;
}

const KernelTable& kernels_for(Isa isa) {
#if defined(CRITICSEARCH_HAVE_AVX2)
    if (isa == Isa::Avx2 && cpu_supports(Isa::Avx2)) return kAvx2Table;
#else
    (void)isa;
#endif
    return kGenericTable;
}

const KernelTable& kernels() { return kernels_for(active_isa()); }

}  // namespace criticsearch::simd
