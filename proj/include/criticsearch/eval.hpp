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

// Answer metrics under canonical open-domain QA normalization.

#include <string>
#include <string_view>
#include <vector>

namespace criticsearch {

// Lowercase, punctuation removed, articles (a, an, the) removed, whitespace
// collapsed and trimmed.
std::string normalize_answer(std::string_view text);
std::vector<std::string> answer_tokens(std::string_view text);

int eval_em(std::string_view prediction, std::string_view gold);
// Token-multiset F1; empty vs empty is 1, empty vs nonempty is 0.
double eval_f1(std::string_view prediction, std::string_view gold);

}  // namespace criticsearch
