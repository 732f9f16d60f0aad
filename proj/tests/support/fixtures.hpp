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

#include "criticsearch/env.hpp"
#include "criticsearch/policy.hpp"

namespace cstest {

using namespace criticsearch;

// Weights under which one question's scripted gold actions win every step by
// a logit margin of at least `big`: each gold token of turn t gets big on the
// turn index, 2 big on its predecessor (or on the turn start for the opening
// tag). Assumes the gold episode fits in max_turns.
inline PolicyParams gold_policy(const Vocabulary& vocab, int max_turns, const Question& q, double big = 100.0) {
    PolicyParams p(vocab, max_turns);
    const FeatureLayout& L = p.layout();
    const auto gold = scripted_gold_actions(q);
    for (std::size_t t = 0; t < gold.size(); ++t) {
        const auto& toks = gold[t];
        for (std::size_t i = 0; i < toks.size(); ++i) {
            const std::size_t prev = i == 0 ? L.turn_start_feature() : L.last_token_offset() + vocab.index(toks[i - 1]);
            p.weight(vocab.index(toks[i]), L.turn_offset() + t) = big;
            p.weight(vocab.index(toks[i]), prev) = 2 * big;
        }
    }
    return p;
}

// Weights that finish one question from any reachable state: answer once the
// gold answer has been seen, else search from the deepest gold-path entity
// seen so far. Tiers are `big` apart.
inline PolicyParams recovering_policy(const Vocabulary& vocab, int max_turns, const Question& q, double big = 10.0) {
    PolicyParams p(vocab, max_turns);
    const FeatureLayout& L = p.layout();
    const auto seen = [&](int e) { return L.entity_offset() + e; };
    const auto last = [&](const Token& t) { return L.last_token_offset() + vocab.index(t); };
    const std::size_t search_open = vocab.index(Token::tag(TokenKind::SearchOpen));
    const std::size_t answer_open = vocab.index(Token::tag(TokenKind::AnswerOpen));
    const std::size_t search_close = vocab.index(Token::tag(TokenKind::SearchClose));
    const std::size_t answer_close = vocab.index(Token::tag(TokenKind::AnswerClose));

    p.weight(search_open, L.turn_start_feature()) = 10 * big;
    p.weight(answer_open, seen(q.gold_answer)) = 20 * big;
    p.weight(vocab.entity_index(q.gold_answer), last(Token::tag(TokenKind::AnswerOpen))) = 40 * big;
    p.weight(answer_close, last(Token::entity(q.gold_answer))) = 60 * big;
    for (std::size_t k = 0; k < q.gold_path.size(); ++k) {
        const Triple& t = q.gold_path[k];
        p.weight(vocab.entity_index(t.head), seen(t.head)) = static_cast<double>(k + 1) * big;
        p.weight(vocab.relation_index(t.relation), last(Token::entity(t.head))) = 10 * big;
    }
    for (int r = 0; r < vocab.num_relations(); ++r) p.weight(search_close, last(Token::relation(r))) = 10 * big;
    return p;
}

}  // namespace cstest
