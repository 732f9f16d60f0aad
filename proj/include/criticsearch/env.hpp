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

// Synthetic multi-hop search environment: a functional triple store, k-hop
// questions with their gold evidence path, a retrieval function with seeded
// distractors, and the per-turn episode state machine.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "criticsearch/tir.hpp"

namespace criticsearch {

// Immutable triple store with at most one tail per (head, relation).
class KnowledgeBase {
public:
    KnowledgeBase() = default;
    // Throws ConfigError on ids out of range or a duplicated (head, relation).
    KnowledgeBase(int num_entities, int num_relations, std::vector<Triple> triples);

    int num_entities() const { return num_entities_; }
    int num_relations() const { return num_relations_; }
    const Vocabulary& vocabulary() const { return vocab_; }
    // Sorted by (head, relation).
    const std::vector<Triple>& triples() const { return triples_; }

    std::optional<int> tail(int head, int relation) const;
    // Position of the (head, relation) triple in triples(), if present.
    std::optional<std::size_t> triple_index(int head, int relation) const;

    friend bool operator==(const KnowledgeBase& a, const KnowledgeBase& b) {
        return a.num_entities_ == b.num_entities_ && a.num_relations_ == b.num_relations_ &&
               a.triples_ == b.triples_;
    }

private:
    int num_entities_ = 0;
    int num_relations_ = 0;
    Vocabulary vocab_;
    std::vector<Triple> triples_;
    std::vector<std::int32_t> slot_;  // (head * R + relation) -> index or -1
};

struct Question {
    std::string id;
    int source = 0;
    std::vector<int> relation_chain;
    int gold_answer = 0;
    std::vector<Triple> gold_path;

    int hops() const { return static_cast<int>(relation_chain.size()); }
};

// "What is R<k> of ... R<1> of E<source>?" plus the gold answer's rendering.
std::string question_text(const Question& q);
std::string answer_text(int entity);

// Seeded sampler: for each head h, each relation r is included with
// probability `density` (one uniform draw per pair, in (h, r) order); a head
// with no relation drawn gets one uniformly chosen relation. Tails are
// uniform over entities other than h. Throws ConfigError when
// num_entities < 2, num_relations < 1 or density outside (0, 1].
KnowledgeBase generate_kb(int num_entities, int num_relations, double density, std::uint64_t seed);

// Random simple path (no repeated entity) of `hops` relations. Throws
// NoPathError when the kb has none.
Question generate_question(const KnowledgeBase& kb, int hops, std::uint64_t seed);

// `count` questions with ids q0..q{count-1}, question i drawn with a seed
// derived from (seed, i).
std::vector<Question> generate_questions(const KnowledgeBase& kb, int hops, int count,
                                         std::uint64_t seed);

// Rebuilds and validates gold_path for a question read from disk.
Question make_question(const KnowledgeBase& kb, std::string id, int source,
                       std::vector<int> relation_chain);

// A query names (head, relation) iff it is exactly [Entity, Relation].
struct Query {
    int head = 0;
    int relation = 0;
    friend bool operator==(const Query&, const Query&) = default;
};
std::optional<Query> as_query(std::span<const Token> search_content);

// Exactly k documents: the matching triple first when the query names an
// existing pair, then distinct distractors chosen by a seeded hash of
// (query, slot). Distractors repeat only when the kb is too small.
std::vector<Document> retrieve(const KnowledgeBase& kb, std::span<const Token> query, int k,
                               std::uint64_t seed);

struct EnvConfig {
    int max_turns = 4;  // T_max
    int k_docs = 3;
    std::uint64_t retrieval_seed = 0;
};

struct StepResult {
    std::optional<std::vector<Document>> feedback;
    bool done = false;
};

class Episode {
public:
    // turns_taken > 0 resumes an episode whose earlier turns were already
    // played (used for forward rollouts from a mid-episode state).
    Episode(const KnowledgeBase& kb, EnvConfig config, int turns_taken = 0);

    // Search: k documents, done only when the turn budget is spent.
    // Answer: no feedback, done. Malformed: empty feedback, done only on
    // budget. Throws EpisodeDone once finished.
    StepResult step(const TurnParse& action);

    int turns_taken() const { return turns_taken_; }
    bool done() const { return done_; }
    const EnvConfig& config() const { return config_; }

private:
    const KnowledgeBase* kb_;
    EnvConfig config_;
    int turns_taken_ = 0;
    bool done_ = false;
};

// Action token sequences of the scripted agent that queries the gold path in
// order and then answers the final tail.
std::vector<std::vector<Token>> scripted_gold_actions(const Question& q);

// Plays the scripted agent through an Episode.
Trajectory scripted_gold_trajectory(const Question& q, const KnowledgeBase& kb, const EnvConfig& env);

// Plays arbitrary per-turn action tokens through an Episode (stops when the
// episode ends). token_logprobs are filled with zeros.
Trajectory play_actions(const Question& q, const KnowledgeBase& kb, const EnvConfig& env,
                        const std::vector<std::vector<Token>>& actions);

// Flat text KB format: header "kb v1 <E> <R>", then "head relation tail" lines.
void write_kb(std::ostream& out, const KnowledgeBase& kb);
KnowledgeBase read_kb(std::istream& in);
void save_kb(const std::string& path, const KnowledgeBase& kb);
KnowledgeBase load_kb(const std::string& path);

// Question JSONL: id, source, relation_chain, gold_answer.
void write_questions(std::ostream& out, std::span<const Question> questions);
std::vector<Question> read_questions(std::istream& in, const KnowledgeBase& kb);
void save_questions(const std::string& path, std::span<const Question> questions);
std::vector<Question> load_questions(const std::string& path, const KnowledgeBase& kb);

}  // namespace criticsearch
