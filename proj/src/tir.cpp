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

#include "criticsearch/tir.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "criticsearch/env.hpp"
#include "criticsearch/errors.hpp"

namespace criticsearch {

namespace {

constexpr std::array<std::string_view, kNumTagTokens> kTagText = {
    "<think>", "</think>", "<search>", "</search>", "<answer>", "</answer>", "<stop>",
};

std::optional<Token> token_from_text(std::string_view word) {
    for (std::size_t i = 0; i < kTagText.size(); ++i) {
        if (word == kTagText[i]) return Token::tag(static_cast<TokenKind>(i));
    }
    if (word.size() < 2 || (word[0] != 'E' && word[0] != 'R')) return std::nullopt;
    int id = 0;
    const auto* first = word.data() + 1;
    const auto* last = word.data() + word.size();
    auto [ptr, ec] = std::from_chars(first, last, id);
    if (ec != std::errc{} || ptr != last || id < 0) return std::nullopt;
    return word[0] == 'E' ? Token::entity(id) : Token::relation(id);
}

std::vector<std::string_view> split_words(std::string_view line) {
    std::vector<std::string_view> words;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) words.push_back(line.substr(i, j - i));
        i = j;
    }
    return words;
}

void check_tokens(std::span<const Token> tokens, const Vocabulary& vocab) {
    for (const Token& t : tokens) {
        if (!vocab.contains(t)) throw InvalidToken(render_token(t));
    }
}

std::string render_document(const Document& d) {
    return "[E" + std::to_string(d.triple.head) + " R" + std::to_string(d.triple.relation) + " E" +
           std::to_string(d.triple.tail) + "]";
}

std::vector<Document> mark_distractors(std::vector<Document> docs, const TurnParse& parse) {
    const auto q = parse.kind == TurnKind::Search ? as_query(parse.content) : std::nullopt;
    for (Document& d : docs) {
        d.is_distractor = !(q && d.triple.head == q->head && d.triple.relation == q->relation);
    }
    return docs;
}

}  // namespace

std::string render_token(const Token& token) {
    switch (token.kind) {
        case TokenKind::Entity:
            return "E" + std::to_string(token.id);
        case TokenKind::Relation:
            return "R" + std::to_string(token.id);
        default:
            return std::string(kTagText[static_cast<std::size_t>(token.kind)]);
    }
}

std::string render_tokens(std::span<const Token> tokens) {
    std::string out;
    for (const Token& t : tokens) {
        if (!out.empty()) out += ' ';
        out += render_token(t);
    }
    return out;
}

Vocabulary::Vocabulary(int num_entities, int num_relations)
    : num_entities_(num_entities), num_relations_(num_relations) {
    if (num_entities < 0 || num_relations < 0) throw ConfigError("negative vocabulary size");
}

bool Vocabulary::contains(const Token& token) const {
    switch (token.kind) {
        case TokenKind::Entity:
            return token.id >= 0 && token.id < num_entities_;
        case TokenKind::Relation:
            return token.id >= 0 && token.id < num_relations_;
        default:
            return true;
    }
}

std::size_t Vocabulary::index(const Token& token) const {
    if (!contains(token)) throw InvalidToken(render_token(token));
    switch (token.kind) {
        case TokenKind::Entity:
            return entity_index(token.id);
        case TokenKind::Relation:
            return relation_index(token.id);
        default:
            return static_cast<std::size_t>(token.kind);
    }
}

Token Vocabulary::token(std::size_t index) const {
    if (index < kNumTagTokens) return Token::tag(static_cast<TokenKind>(index));
    index -= kNumTagTokens;
    if (index < static_cast<std::size_t>(num_entities_)) return Token::entity(static_cast<int>(index));
    index -= num_entities_;
    if (index < static_cast<std::size_t>(num_relations_)) return Token::relation(static_cast<int>(index));
    throw InvalidToken("index " + std::to_string(index + kNumTagTokens + num_entities_));
}

std::string_view turn_kind_name(TurnKind kind) {
    switch (kind) {
        case TurnKind::Search:
            return "search";
        case TurnKind::Answer:
            return "answer";
        case TurnKind::Malformed:
            return "malformed";
    }
    return "malformed";
}

TurnKind turn_kind_from_name(std::string_view name) {
    if (name == "search") return TurnKind::Search;
    if (name == "answer") return TurnKind::Answer;
    if (name == "malformed") return TurnKind::Malformed;
    throw FormatError("unknown turn kind '" + std::string(name) + "'");
}

std::size_t Trajectory::action_token_count() const {
    std::size_t n = 0;
    for (const Turn& t : turns) n += t.action_tokens.size();
    return n;
}

std::size_t Trajectory::search_turn_count() const {
    return static_cast<std::size_t>(std::count_if(
        turns.begin(), turns.end(), [](const Turn& t) { return t.kind == TurnKind::Search; }));
}

TurnParse parse_turn_action(std::span<const Token> tokens) {
    enum class State { Outside, Think, Span };
    State state = State::Outside;
    TurnKind span_kind = TurnKind::Malformed;
    TokenKind closer = TokenKind::SearchClose;
    TurnParse result;
    bool have_action = false;
    const TurnParse malformed{};

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const Token& t = tokens[i];
        switch (state) {
            case State::Outside:
                if (t.kind == TokenKind::ThinkOpen) {
                    state = State::Think;
                } else if (t.kind == TokenKind::StopTurn) {
                    if (i + 1 != tokens.size()) return malformed;
                } else if ((t.kind == TokenKind::SearchOpen || t.kind == TokenKind::AnswerOpen) &&
                           !have_action) {
                    state = State::Span;
                    span_kind = t.kind == TokenKind::SearchOpen ? TurnKind::Search : TurnKind::Answer;
                    closer = t.kind == TokenKind::SearchOpen ? TokenKind::SearchClose : TokenKind::AnswerClose;
                } else {
                    return malformed;
                }
                break;
            case State::Think:
                if (t.kind == TokenKind::ThinkClose) {
                    state = State::Outside;
                } else if (t.kind == TokenKind::ThinkOpen || t.kind == TokenKind::StopTurn) {
                    return malformed;
                }
                break;
            case State::Span:
                if (t.is_content()) {
                    result.content.push_back(t);
                } else if (t.kind == closer) {
                    state = State::Outside;
                    have_action = true;
                    result.kind = span_kind;
                } else {
                    return malformed;
                }
                break;
        }
    }
    if (state != State::Outside || !have_action) return malformed;
    return result;
}

bool check_format(const Trajectory& traj) {
    if (traj.terminated && traj.turns.empty()) return false;
    for (std::size_t i = 0; i < traj.turns.size(); ++i) {
        const TurnParse p = parse_turn_action(traj.turns[i].action_tokens);
        if (p.kind == TurnKind::Malformed) return false;
        if (p.kind == TurnKind::Answer && i + 1 != traj.turns.size()) return false;
    }
    if (traj.terminated &&
        parse_turn_action(traj.turns.back().action_tokens).kind != TurnKind::Answer) {
        return false;
    }
    return true;
}

std::optional<std::string> extract_answer(const Trajectory& traj) {
    for (const Turn& turn : traj.turns) {
        const auto& tokens = turn.action_tokens;
        bool in_think = false;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const TokenKind k = tokens[i].kind;
            if (in_think) {
                if (k == TokenKind::ThinkClose) in_think = false;
                continue;
            }
            if (k == TokenKind::ThinkOpen) {
                in_think = true;
                continue;
            }
            if (k != TokenKind::AnswerOpen) continue;
            std::size_t j = i + 1;
            while (j < tokens.size() && tokens[j].is_content()) ++j;
            if (j < tokens.size() && tokens[j].kind == TokenKind::AnswerClose) {
                return render_tokens(std::span<const Token>(tokens).subspan(i + 1, j - i - 1));
            }
        }
    }
    return std::nullopt;
}

std::optional<std::string> extract_answer_text(std::string_view text) {
    constexpr std::string_view open = "<answer>";
    constexpr std::string_view close = "</answer>";
    std::size_t pos = 0;
    while ((pos = text.find(open, pos)) != std::string_view::npos) {
        const std::size_t body = pos + open.size();
        const std::size_t next_tag = text.find('<', body);
        if (next_tag != std::string_view::npos && text.compare(next_tag, close.size(), close) == 0) {
            std::string_view inner = text.substr(body, next_tag - body);
            const auto b = inner.find_first_not_of(" \t\r\n");
            if (b == std::string_view::npos) return std::string();
            const auto e = inner.find_last_not_of(" \t\r\n");
            return std::string(inner.substr(b, e - b + 1));
        }
        pos = body;
    }
    return std::nullopt;
}

std::string serialize_trajectory(const Trajectory& traj, const KnowledgeBase& kb) {
    const Vocabulary& vocab = kb.vocabulary();
    std::string out;
    for (const Turn& turn : traj.turns) {
        check_tokens(turn.action_tokens, vocab);
        out += render_tokens(turn.action_tokens);
        if (turn.feedback) {
            if (!turn.action_tokens.empty()) out += ' ';
            out += "<information>";
            for (const Document& d : *turn.feedback) {
                const Triple& t = d.triple;
                if (!vocab.contains(Token::entity(t.head)) || !vocab.contains(Token::entity(t.tail)) ||
                    !vocab.contains(Token::relation(t.relation))) {
                    throw InvalidToken("document " + render_document(d));
                }
                out += ' ';
                out += render_document(d);
            }
            out += " </information>";
        }
        out += '\n';
    }
    return out;
}

std::vector<Turn> parse_trajectory_text(std::string_view text, const KnowledgeBase& kb) {
    std::vector<Turn> turns;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        const std::string_view line = text.substr(start, end - start);
        start = end + 1;

        const auto words = split_words(line);
        Turn turn;
        std::size_t i = 0;
        for (; i < words.size() && words[i] != "<information>"; ++i) {
            auto tok = token_from_text(words[i]);
            if (!tok) throw FormatError("bad token '" + std::string(words[i]) + "'");
            turn.action_tokens.push_back(*tok);
        }
        check_tokens(turn.action_tokens, kb.vocabulary());
        const TurnParse parse = parse_turn_action(turn.action_tokens);
        if (i < words.size()) {
            std::vector<Document> docs;
            ++i;
            while (i < words.size() && words[i] != "</information>") {
                if (i + 2 >= words.size()) throw FormatError("truncated document");
                auto strip = [](std::string_view w, char c, bool front) {
                    if (front ? (!w.empty() && w.front() == c) : (!w.empty() && w.back() == c)) {
                        return front ? w.substr(1) : w.substr(0, w.size() - 1);
                    }
                    throw FormatError("malformed document bracket");
                };
                const auto h = token_from_text(strip(words[i], '[', true));
                const auto r = token_from_text(words[i + 1]);
                const auto t = token_from_text(strip(words[i + 2], ']', false));
                if (!h || !r || !t || h->kind != TokenKind::Entity || r->kind != TokenKind::Relation ||
                    t->kind != TokenKind::Entity) {
                    throw FormatError("malformed document");
                }
                docs.push_back(Document{Triple{h->id, r->id, t->id}, true});
                i += 3;
            }
            if (i >= words.size()) throw FormatError("unterminated <information>");
            turn.feedback = mark_distractors(std::move(docs), parse);
        }
        turn.kind = parse.kind;
        turns.push_back(std::move(turn));
    }
    return turns;
}

nlohmann::json trajectory_to_json(const Trajectory& traj, const KnowledgeBase& kb) {
    const Vocabulary& vocab = kb.vocabulary();
    nlohmann::json turns = nlohmann::json::array();
    for (const Turn& turn : traj.turns) {
        nlohmann::json ids = nlohmann::json::array();
        for (const Token& t : turn.action_tokens) ids.push_back(vocab.index(t));
        nlohmann::json feedback = nullptr;
        if (turn.feedback) {
            feedback = nlohmann::json::array();
            for (const Document& d : *turn.feedback) {
                const auto idx = kb.triple_index(d.triple.head, d.triple.relation);
                if (!idx || kb.triples()[*idx].tail != d.triple.tail) {
                    throw InvalidToken("document " + render_document(d) + " not in kb");
                }
                feedback.push_back(*idx);
            }
        }
        turns.push_back({{"action_token_ids", std::move(ids)},
                         {"kind", turn_kind_name(turn.kind)},
                         {"feedback_doc_ids", std::move(feedback)}});
    }
    nlohmann::json answer = nullptr;
    if (traj.extracted_answer) answer = *traj.extracted_answer;
    return {{"question_id", traj.question_id},
            {"turns", std::move(turns)},
            {"token_logprobs", traj.token_logprobs},
            {"extracted_answer", std::move(answer)},
            {"terminated", traj.terminated},
            {"seed", traj.seed}};
}

Trajectory trajectory_from_json(const nlohmann::json& record, const KnowledgeBase& kb) {
    try {
        const Vocabulary& vocab = kb.vocabulary();
        Trajectory traj;
        traj.question_id = record.at("question_id").get<std::string>();
        for (const auto& jt : record.at("turns")) {
            Turn turn;
            for (const auto& id : jt.at("action_token_ids")) turn.action_tokens.push_back(vocab.token(id.get<std::size_t>()));
            const TurnParse parse = parse_turn_action(turn.action_tokens);
            turn.kind = turn_kind_from_name(jt.at("kind").get<std::string>());
            if (turn.kind != parse.kind) throw FormatError("turn kind disagrees with its tokens");
            const auto& fb = jt.at("feedback_doc_ids");
            if (!fb.is_null()) {
                std::vector<Document> docs;
                for (const auto& id : fb) {
                    const auto idx = id.get<std::size_t>();
                    if (idx >= kb.triples().size()) throw FormatError("feedback doc id out of range");
                    docs.push_back(Document{kb.triples()[idx], true});
                }
                turn.feedback = mark_distractors(std::move(docs), parse);
            }
            traj.turns.push_back(std::move(turn));
        }
        traj.token_logprobs = record.at("token_logprobs").get<std::vector<double>>();
        if (traj.token_logprobs.size() != traj.action_token_count()) {
            throw FormatError("token_logprobs length does not match the action token count");
        }
        const auto& ans = record.at("extracted_answer");
        if (!ans.is_null()) traj.extracted_answer = ans.get<std::string>();
        traj.terminated = record.at("terminated").get<bool>();
        traj.seed = record.value("seed", std::uint64_t{0});
        return traj;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("trajectory record: ") + e.what());
    }
}

std::vector<Trajectory> read_trajectories(const std::string& path, const KnowledgeBase& kb) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open " + path);
    std::vector<Trajectory> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(trajectory_from_json(nlohmann::json::parse(line), kb));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ": " + e.what());
        }
    }
    return out;
}

}  // namespace criticsearch
