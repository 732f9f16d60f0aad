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

#include "criticsearch/eval.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace criticsearch {

std::vector<std::string> answer_tokens(std::string_view text) {
    std::string cleaned;
    cleaned.reserve(text.size());
    for (unsigned char c : text) {
        if (std::ispunct(c)) continue;
        cleaned.push_back(static_cast<char>(std::tolower(c)));
    }
    std::vector<std::string> out;
    std::istringstream words(cleaned);
    std::string w;
    while (words >> w) {
        if (w == "a" || w == "an" || w == "the") continue;
        out.push_back(std::move(w));
    }
    return out;
}

std::string normalize_answer(std::string_view text) {
    std::string out;
    for (const auto& w : answer_tokens(text)) {
        if (!out.empty()) out.push_back(' ');
        out += w;
    }
    return out;
}

int eval_em(std::string_view prediction, std::string_view gold) {
    return normalize_answer(prediction) == normalize_answer(gold) ? 1 : 0;
}

double eval_f1(std::string_view prediction, std::string_view gold) {
    const auto pred = answer_tokens(prediction);
    const auto ref = answer_tokens(gold);
    if (pred.empty() || ref.empty()) return pred.empty() && ref.empty() ? 1.0 : 0.0;
    std::map<std::string, int> counts;
    for (const auto& w : ref) ++counts[w];
    int common = 0;
    for (const auto& w : pred) {
        auto it = counts.find(w);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++common;
        }
    }
    if (common == 0) return 0.0;
    const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common) / static_cast<double>(ref.size());
    return 2.0 * precision * recall / (precision + recall);
}

}  // namespace criticsearch
