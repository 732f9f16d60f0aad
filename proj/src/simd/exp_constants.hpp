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

// Shared constants for the exp kernels: x = n*ln2 + r with |r| <= ln2/2,
// exp(r) by a degree-13 Taylor polynomial in Horner form, then scaled by 2^n
// through the exponent field. Both ISAs run the exact same operation
// sequence, so elementwise results agree bit for bit.

namespace criticsearch::simd::detail {

inline constexpr double kLog2e = 1.4426950408889634074;
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
// 2^52 + 2^51: adding it to an integral double leaves the integer in the low
// mantissa bits.
inline constexpr double kRoundMagic = 6755399441055744.0;
inline constexpr double kExpUnderflow = -708.0;
inline constexpr double kExpOverflow = 709.0;

// 1/k! for k = 13 down to 0.
inline constexpr double kExpCoeffs[14] = {
    1.0 / 6227020800.0, 1.0 / 479001600.0, 1.0 / 39916800.0, 1.0 / 3628800.0,
    1.0 / 362880.0,     1.0 / 40320.0,     1.0 / 5040.0,     1.0 / 720.0,
    1.0 / 120.0,        1.0 / 24.0,        1.0 / 6.0,        0.5,
    1.0,                1.0,
};

}  // namespace criticsearch::simd::detail
