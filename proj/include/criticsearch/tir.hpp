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

// Tool-integrated reasoning data model: tokens, turns and trajectories, the
// tagged-text rendering of an episode, and the format/answer checks that the
// reward and the critics build on.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace criticsearch {

class KnowledgeBase;

enum class TokenKind : std::uint8_t {
    ThinkOpen,
    ThinkClose,
    SearchOpen,
    SearchClose,
    AnswerOpen,
    AnswerClose,
    StopTurn,
    Entity,
    Relation,
};

inline constexpr std::size_t kNumTagTokens = 7;

struct Token {
    TokenKind kind = TokenKind::StopTurn;
    std::int32_t id = 0;  // meaningful for Entity / Relation only

    static constexpr Token tag(TokenKind k) { return Token{k, 0}; }
    static constexpr Token entity(std::int32_t id) { return Token{TokenKind::Entity, id}; }
    static constexpr Token relation(std::int32_t id) { return Token{TokenKind::Relation, id}; }

    bool is_content() const { return kind == TokenKind::Entity || kind == TokenKind::Relation; }
    friend bool operator==(const Token&, const Token&) = default;
};

// Renders one token: tags as <search>, </search>, ..., <stop>; entities as
// E<id>; relations as R<id>.
std::string render_token(const Token& token);
std::string render_tokens(std::span<const Token> tokens);

// Finite token set indexed as: the seven tag tokens in TokenKind order, then
// entities 0..E-1, then relations 0..R-1.
class Vocabulary {
public:
    Vocabulary() = default;
    Vocabulary(int num_entities, int num_relations);

    int num_entities() const { return num_entities_; }
    int num_relations() const { return num_relations_; }
    std::size_t size() const { return kNumTagTokens + num_entities_ + num_relations_; }

    bool contains(const Token& token) const;
    // Throws InvalidToken for out-of-range entity/relation ids.
    std::size_t index(const Token& token) const;
    Token token(std::size_t index) const;

    std::size_t entity_index(int entity) const { return kNumTagTokens + entity; }
    std::size_t relation_index(int relation) const { return kNumTagTokens + num_entities_ + relation; }

    friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

private:
    int num_entities_ = 0;
    int num_relations_ = 0;
};

struct Triple {
    int head = 0;
    int relation = 0;
    int tail = 0;
    friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct Document {
    Triple triple;
    bool is_distractor = true;
    friend bool operator==(const Document&, const Document&) = default;
};

enum class TurnKind : std::uint8_t { Search, Answer, Malformed };

std::string_view turn_kind_name(TurnKind kind);
TurnKind turn_kind_from_name(std::string_view name);

struct TurnParse {
    TurnKind kind = TurnKind::Malformed;
    std::vector<Token> content;  // query or answer tokens, without tags
};

struct Turn {
    std::vector<Token> action_tokens;
    // Present for Search (k documents) and Malformed (empty) turns, absent
    // for Answer turns.
    std::optional<std::vector<Document>> feedback;
    TurnKind kind = TurnKind::Malformed;
};

struct Trajectory {
    std::string question_id;
    std::vector<Turn> turns;
    std::vector<double> token_logprobs;  // one per action token, feedback excluded
    std::optional<std::string> extracted_answer;
    bool terminated = false;
    std::uint64_t seed = 0;

    std::size_t action_token_count() const;
    std::size_t search_turn_count() const;
};

// Classifies one turn's action tokens. Think spans are skipped; a trailing
// StopTurn is allowed. Anything else outside exactly one well-formed
// <search>...</search> or <answer>...</answer> span makes the turn Malformed.
TurnParse parse_turn_action(std::span<const Token> action_tokens);

// True iff every turn parses, an Answer turn appears only last, and a
// terminated trajectory ends with an Answer turn.
bool check_format(const Trajectory& traj);

// Rendered content of the first well-formed <answer>...</answer> pair in the
// action tokens (think spans skipped), else nullopt. Feedback never matters.
std::optional<std::string> extract_answer(const Trajectory& traj);

// Same rule applied to raw tagged text: trimmed content of the first
// <answer>...</answer> pair with no other tag inside.
std::optional<std::string> extract_answer_text(std::string_view text);

// One turn per line: action tokens, then <information> [E R E] ... </information>
// when feedback is present. Throws InvalidToken on ids outside the kb.
std::string serialize_trajectory(const Trajectory& traj, const KnowledgeBase& kb);

// Inverse of serialize_trajectory for the turn structure. Turn kinds are
// re-derived with parse_turn_action; is_distractor is re-derived from the
// query. Throws FormatError on unparseable text.
std::vector<Turn> parse_trajectory_text(std::string_view text, const KnowledgeBase& kb);

// JSONL trajectory record (question_id, turns[action_token_ids, kind,
// feedback_doc_ids], token_logprobs, extracted_answer, terminated, seed).
nlohmann::json trajectory_to_json(const Trajectory& traj, const KnowledgeBase& kb);
Trajectory trajectory_from_json(const nlohmann::json& record, const KnowledgeBase& kb);

std::vector<Trajectory> read_trajectories(const std::string& path, const KnowledgeBase& kb);

}  // namespace criticsearch
