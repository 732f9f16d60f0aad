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

#include "criticsearch/env.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "criticsearch/errors.hpp"
#include "criticsearch/rng.hpp"

namespace criticsearch {

KnowledgeBase::KnowledgeBase(int num_entities, int num_relations, std::vector<Triple> triples)
    : num_entities_(num_entities),
      num_relations_(num_relations),
      vocab_(num_entities, num_relations),
      triples_(std::move(triples)) {
    if (num_entities < 1 || num_relations < 1) throw ConfigError("empty knowledge base bounds");
    std::sort(triples_.begin(), triples_.end());
    slot_.assign(static_cast<std::size_t>(num_entities) * num_relations, -1);
    for (std::size_t i = 0; i < triples_.size(); ++i) {
        const Triple& t = triples_[i];
        if (t.head < 0 || t.head >= num_entities || t.tail < 0 || t.tail >= num_entities ||
            t.relation < 0 || t.relation >= num_relations) {
            throw ConfigError("triple id out of range");
        }
        auto& s = slot_[static_cast<std::size_t>(t.head) * num_relations + t.relation];
        if (s >= 0) throw ConfigError("relation is not functional at head " + std::to_string(t.head));
        s = static_cast<std::int32_t>(i);
    }
}

std::optional<std::size_t> KnowledgeBase::triple_index(int head, int relation) const {
    if (head < 0 || head >= num_entities_ || relation < 0 || relation >= num_relations_) return std::nullopt;
    const auto s = slot_[static_cast<std::size_t>(head) * num_relations_ + relation];
    if (s < 0) return std::nullopt;
    return static_cast<std::size_t>(s);
}

std::optional<int> KnowledgeBase::tail(int head, int relation) const {
    const auto idx = triple_index(head, relation);
    if (!idx) return std::nullopt;
    return triples_[*idx].tail;
}

std::string answer_text(int entity) { return "E" + std::to_string(entity); }

std::string question_text(const Question& q) {
    std::string text = "What is";
    for (auto it = q.relation_chain.rbegin(); it != q.relation_chain.rend(); ++it) {
        text += " R" + std::to_string(*it) + " of";
    }
    return text + " E" + std::to_string(q.source) + "?";
}

KnowledgeBase generate_kb(int num_entities, int num_relations, double density, std::uint64_t seed) {
    if (num_entities < 2) throw ConfigError("num_entities must be >= 2");
    if (num_relations < 1) throw ConfigError("num_relations must be >= 1");
    if (!(density > 0.0 && density <= 1.0)) throw ConfigError("density must be in (0, 1]");

    Rng rng(seed);
    auto draw_tail = [&](int head) {
        auto t = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_entities - 1)));
        return t >= head ? t + 1 : t;
    };
    std::vector<Triple> triples;
    for (int h = 0; h < num_entities; ++h) {
        bool any = false;
        for (int r = 0; r < num_relations; ++r) {
            if (rng.uniform01() < density) {
                triples.push_back({h, r, draw_tail(h)});
                any = true;
            }
        }
        if (!any) {
            const auto r = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_relations)));
            triples.push_back({h, r, draw_tail(h)});
        }
    }
    return KnowledgeBase(num_entities, num_relations, std::move(triples));
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.uniform_index(i)]);
    }
}

bool extend_path(const KnowledgeBase& kb, int node, int hops, Rng& rng, std::vector<bool>& visited,
                 std::vector<Triple>& path) {
    if (static_cast<int>(path.size()) == hops) return true;
    std::vector<int> relations;
    for (int r = 0; r < kb.num_relations(); ++r) {
        const auto t = kb.tail(node, r);
        if (t && !visited[*t]) relations.push_back(r);
    }
    shuffle(relations, rng);
    for (int r : relations) {
        const int t = *kb.tail(node, r);
        visited[t] = true;
        path.push_back({node, r, t});
        if (extend_path(kb, t, hops, rng, visited, path)) return true;
        path.pop_back();
        visited[t] = false;
    }
    return false;
}

std::uint64_t query_hash(std::span<const Token> query) {
    std::uint64_t h = 0x51ed270b9a3c4f1dULL;
    for (const Token& t : query) {
        h = splitmix64(h ^ (static_cast<std::uint64_t>(t.kind) << 32) ^ static_cast<std::uint32_t>(t.id));
    }
    return splitmix64(h ^ query.size());
}

}  // namespace

Question generate_question(const KnowledgeBase& kb, int hops, std::uint64_t seed) {
    if (hops < 1) throw ConfigError("hops must be >= 1");
    Rng rng(seed);
    std::vector<int> sources(static_cast<std::size_t>(kb.num_entities()));
    for (int i = 0; i < kb.num_entities(); ++i) sources[i] = i;
    shuffle(sources, rng);
    for (int s : sources) {
        std::vector<bool> visited(static_cast<std::size_t>(kb.num_entities()), false);
        visited[s] = true;
        std::vector<Triple> path;
        if (extend_path(kb, s, hops, rng, visited, path)) {
            Question q;
            q.source = s;
            for (const Triple& t : path) q.relation_chain.push_back(t.relation);
            q.gold_answer = path.back().tail;
            q.gold_path = std::move(path);
            return q;
        }
    }
    throw NoPathError("no simple path with " + std::to_string(hops) + " hops");
}

std::vector<Question> generate_questions(const KnowledgeBase& kb, int hops, int count, std::uint64_t seed) {
    std::vector<Question> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        Question q = generate_question(kb, hops, derive_seed({seed, static_cast<std::uint64_t>(i)}));
        q.id = "q" + std::to_string(i);
        out.push_back(std::move(q));
    }
    return out;
}

Question make_question(const KnowledgeBase& kb, std::string id, int source, std::vector<int> relation_chain) {
    if (source < 0 || source >= kb.num_entities()) throw FormatError("question source out of range");
    if (relation_chain.empty()) throw FormatError("empty relation chain");
    Question q;
    q.id = std::move(id);
    q.source = source;
    int node = source;
    for (int r : relation_chain) {
        const auto t = kb.tail(node, r);
        if (!t) throw NoPathError("relation chain leaves the kb at E" + std::to_string(node));
        q.gold_path.push_back({node, r, *t});
        node = *t;
    }
    q.relation_chain = std::move(relation_chain);
    q.gold_answer = node;
    return q;
}

std::optional<Query> as_query(std::span<const Token> content) {
    if (content.size() != 2 || content[0].kind != TokenKind::Entity || content[1].kind != TokenKind::Relation) {
        return std::nullopt;
    }
    return Query{content[0].id, content[1].id};
}

std::vector<Document> retrieve(const KnowledgeBase& kb, std::span<const Token> query, int k, std::uint64_t seed) {
    if (k < 1) throw ConfigError("k must be >= 1");
    std::vector<Document> docs;
    docs.reserve(static_cast<std::size_t>(k));
    std::optional<std::size_t> match;
    if (const auto q = as_query(query)) match = kb.triple_index(q->head, q->relation);
    if (match) docs.push_back(Document{kb.triples()[*match], false});

    const std::size_t n = kb.triples().size();
    const std::size_t available = n - (match ? 1 : 0);
    std::vector<std::size_t> chosen;
    const std::uint64_t qh = query_hash(query);
    for (int slot = static_cast<int>(docs.size()); slot < k; ++slot) {
        const bool distinct = chosen.size() < available;
        std::size_t idx = 0;
        for (std::uint64_t attempt = 0;; ++attempt) {
            idx = derive_seed({seed, qh, static_cast<std::uint64_t>(slot), attempt}) % n;
            if (available == 0) break;
            if (match && idx == *match) continue;
            if (distinct && std::find(chosen.begin(), chosen.end(), idx) != chosen.end()) continue;
            break;
        }
        chosen.push_back(idx);
        docs.push_back(Document{kb.triples()[idx], true});
    }
    return docs;
}

Episode::Episode(const KnowledgeBase& kb, EnvConfig config, int turns_taken)
    : kb_(&kb), config_(config), turns_taken_(turns_taken) {
    if (config.max_turns < 1) throw ConfigError("max_turns must be >= 1");
    if (config.k_docs < 1) throw ConfigError("k_docs must be >= 1");
    if (turns_taken < 0 || turns_taken > config.max_turns) throw ConfigError("turns_taken outside the budget");
    done_ = turns_taken_ >= config_.max_turns;
}

StepResult Episode::step(const TurnParse& action) {
    if (done_) throw EpisodeDone("turn " + std::to_string(turns_taken_ + 1));
    ++turns_taken_;
    const bool budget_spent = turns_taken_ >= config_.max_turns;
    StepResult result;
    switch (action.kind) {
        case TurnKind::Search:
            result.feedback = retrieve(*kb_, action.content, config_.k_docs, config_.retrieval_seed);
            result.done = budget_spent;
            break;
        case TurnKind::Answer:
            result.done = true;
            break;
        case TurnKind::Malformed:
            result.feedback = std::vector<Document>{};
            result.done = budget_spent;
            break;
    }
    done_ = result.done;
    return result;
}

std::vector<std::vector<Token>> scripted_gold_actions(const Question& q) {
    std::vector<std::vector<Token>> actions;
    for (const Triple& t : q.gold_path) {
        actions.push_back({Token::tag(TokenKind::SearchOpen), Token::entity(t.head), Token::relation(t.relation),
                           Token::tag(TokenKind::SearchClose)});
    }
    actions.push_back({Token::tag(TokenKind::AnswerOpen), Token::entity(q.gold_answer),
                       Token::tag(TokenKind::AnswerClose)});
    return actions;
}

Trajectory play_actions(const Question& q, const KnowledgeBase& kb, const EnvConfig& env,
                        const std::vector<std::vector<Token>>& actions) {
    Episode episode(kb, env);
    Trajectory traj;
    traj.question_id = q.id;
    for (const auto& action : actions) {
        if (episode.done()) break;
        const TurnParse parse = parse_turn_action(action);
        StepResult r = episode.step(parse);
        traj.turns.push_back(Turn{action, std::move(r.feedback), parse.kind});
        if (r.done) traj.terminated = true;
    }
    traj.token_logprobs.assign(traj.action_token_count(), 0.0);
    traj.extracted_answer = extract_answer(traj);
    return traj;
}

Trajectory scripted_gold_trajectory(const Question& q, const KnowledgeBase& kb, const EnvConfig& env) {
    return play_actions(q, kb, env, scripted_gold_actions(q));
}

void write_kb(std::ostream& out, const KnowledgeBase& kb) {
    out << "kb v1 " << kb.num_entities() << ' ' << kb.num_relations() << '\n';
    for (const Triple& t : kb.triples()) out << t.head << ' ' << t.relation << ' ' << t.tail << '\n';
}

KnowledgeBase read_kb(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty kb file");
    std::istringstream header(line);
    std::string magic, version;
    int e = 0, r = 0;
    if (!(header >> magic >> version >> e >> r) || magic != "kb" || version != "v1") {
        throw FormatError("kb header must be 'kb v1 <num_entities> <num_relations>'");
    }
    std::vector<Triple> triples;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream row(line);
        Triple t;
        std::string extra;
        if (!(row >> t.head >> t.relation >> t.tail) || (row >> extra)) {
            throw FormatError("bad kb triple line '" + line + "'");
        }
        triples.push_back(t);
    }
    try {
        return KnowledgeBase(e, r, std::move(triples));
    } catch (const ConfigError& err) {
        throw FormatError(err.what());
    }
}

void save_kb(const std::string& path, const KnowledgeBase& kb) {
    std::ofstream out(path);
    if (!out) throw RunError("cannot write " + path);
    write_kb(out, kb);
    if (!out) throw RunError("write failed for " + path);
}

KnowledgeBase load_kb(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open " + path);
    return read_kb(in);
}

void write_questions(std::ostream& out, std::span<const Question> questions) {
    for (const Question& q : questions) {
        const nlohmann::json rec = {
            {"id", q.id},
            {"source", q.source},
            {"relation_chain", q.relation_chain},
            {"gold_answer", q.gold_answer},
        };
        out << rec.dump() << '\n';
    }
}

std::vector<Question> read_questions(std::istream& in, const KnowledgeBase& kb) {
    std::vector<Question> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            std::string id = rec.contains("id") ? rec.at("id").get<std::string>() : "q" + std::to_string(out.size());
            Question q = make_question(kb, std::move(id), rec.at("source").get<int>(),
                                       rec.at("relation_chain").get<std::vector<int>>());
            if (q.gold_answer != rec.at("gold_answer").get<int>()) {
                throw FormatError("gold_answer disagrees with the kb for question " + q.id);
            }
            out.push_back(std::move(q));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("question record: ") + e.what());
        }
    }
    return out;
}

void save_questions(const std::string& path, std::span<const Question> questions) {
    std::ofstream out(path);
    if (!out) throw RunError("cannot write " + path);
    write_questions(out, questions);
}

std::vector<Question> load_questions(const std::string& path, const KnowledgeBase& kb) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open " + path);
    return read_questions(in, kb);
}

}  // namespace criticsearch
