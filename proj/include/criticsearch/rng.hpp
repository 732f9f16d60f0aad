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

#include <cstdint>
#include <initializer_list>
#include <random>

namespace criticsearch {

std::uint64_t splitmix64(std::uint64_t x);

// Hash-combines a sequence of integers into one seed. Used to derive
// per-trajectory seeds from (run seed, step, question index, group index) so
// that results do not depend on execution order.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

// mt19937_64 with platform-independent conversions (the standard
// distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // Uniform in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    // Uniform in [0, n) by rejection; n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

}  // namespace criticsearch
