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


#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "criticsearch/critic.hpp"
#include "criticsearch/env.hpp"
#include "criticsearch/errors.hpp"
#include "criticsearch/rng.hpp"
#include "support/generators.hpp"
#include "support/mock_critic_server.hpp"

using namespace criticsearch;
using cstest::MockCriticServer;

namespace {

constexpr Label G = Label::Good;
constexpr Label B = Label::Bad;

struct World {
    KnowledgeBase kb = generate_kb(20, 4, 0.4, 2);
    Question q = generate_question(kb, 3, 5);
    EnvConfig env{};
};

std::vector<Token> search(int head, int rel) {
    return {Token::tag(TokenKind::SearchOpen), Token::entity(head), Token::relation(rel),
            Token::tag(TokenKind::SearchClose)};
}
std::vector<Token> answer(int e) {
    return {Token::tag(TokenKind::AnswerOpen), Token::entity(e), Token::tag(TokenKind::AnswerClose)};
}
std::vector<Token> hop(const Question& q, std::size_t i) {
    return search(q.gold_path[i].head, q.gold_path[i].relation);
}

// A (head, relation) pair that is not on the gold path.
std::vector<Token> off_path(const Question& q, const KnowledgeBase& kb) {
    for (int h = 0; h < kb.num_entities(); ++h) {
        for (int r = 0; r < kb.num_relations(); ++r) {
            const bool on = std::any_of(q.gold_path.begin(), q.gold_path.end(),
                                        [&](const Triple& t) { return t.head == h && t.relation == r; });
            if (!on) return search(h, r);
        }
    }
    return {};
}

CriticEndpointConfig endpoint(const MockCriticServer& server) {
    CriticEndpointConfig c;
    c.base_url = server.base_url();
    c.model_name = "critic-test";
    c.timeout = std::chrono::milliseconds(2000);
    c.retry_backoff = std::chrono::milliseconds(1);
    c.api_key = "secret";
    return c;
}

}  // namespace

TEST_CASE("critique prompt") {
    const std::string p = build_critique_prompt("What is R1 of E3?", "<search> E3 R1 </search>\n", "E7", "E7");
    CHECK(p.find("Do not evaluate the \"answer\" actions, only evaluate the \"search\" actions.") != std::string::npos);
    CHECK(p.find("Golden answers: E7\n") != std::string::npos);
    CHECK(p.find("Extracted answer: E7\n") != std::string::npos);
    CHECK(p.find("Solution string: Question: What is R1 of E3?\n<search> E3 R1 </search>\n") != std::string::npos);
    CHECK(p.find("<score>1, 0, 0, 1</score>") != std::string::npos);
    CHECK(p == build_critique_prompt("What is R1 of E3?", "<search> E3 R1 </search>\n", "E7", "E7"));
    for (int rule = 1; rule <= 9; ++rule) CHECK(p.find("    " + std::to_string(rule) + ". ") != std::string::npos);

    const std::string no_gold =
        build_critique_prompt("What is R1 of E3?", "<search> E3 R1 </search>\n", "E7", "E7", false);
    CHECK(no_gold.find("Golden answers:") == std::string::npos);
    CHECK(no_gold.find("Extracted answer: E7") != std::string::npos);

    World w;
    const Trajectory t = scripted_gold_trajectory(w.q, w.kb, w.env);
    const std::string full = critique_prompt_for(t, w.q, w.kb);
    CHECK(full.find(serialize_trajectory(t, w.kb)) != std::string::npos);
    CHECK(full.find(question_text(w.q)) != std::string::npos);
}

TEST_CASE("parse_scores") {
    CHECK(parse_scores("analysis... <score>1, 0, 0, 1</score>", 4) == std::vector<Label>{G, B, B, G});
    CHECK(parse_scores("<score></score>", 0).empty());
    CHECK(parse_scores("<score> </score>", 0).empty());
    CHECK(parse_scores("<score>0</score> then <score>1,1</score>", 2) == std::vector<Label>{G, G});
    CHECK_THROWS_AS(parse_scores("<score>1</score>", 2), CountMismatch);
    CHECK_THROWS_AS(parse_scores("no tag", 0), MissingScore);
    CHECK_THROWS_AS(parse_scores("<score>1, 0", 2), MissingScore);
    CHECK_THROWS_AS(parse_scores("<score>1, 2</score>", 2), BadToken);
    CHECK_THROWS_AS(parse_scores("<score>1,,0</score>", 3), BadToken);
    CHECK_THROWS_AS(parse_scores("<score>yes</score>", 1), BadToken);

    Rng rng(1);
    for (int trial = 0; trial < 2000; ++trial) {
        const auto labels = cstest::random_labels(rng, rng.uniform_index(12));
        const std::string text = "prefix " + format_scores(labels) + " suffix";
        CHECK(parse_scores(text, static_cast<int>(labels.size())) == labels);
    }
    CHECK(format_scores(std::vector<Label>{G, B}) == "<score>1, 0</score>");
}

TEST_CASE("oracle_judge") {
    World w;
    const Question& q = w.q;
    const auto judge = [&](std::vector<std::vector<Token>> actions) {
        return oracle_judge(play_actions(q, w.kb, w.env, actions), q, w.kb).labels;
    };
    CHECK(judge({hop(q, 0), hop(q, 1), hop(q, 2)}) == std::vector<Label>{G, G, G});
    CHECK(judge({hop(q, 0), hop(q, 0), answer(q.gold_answer)}) == std::vector<Label>{G, B});
    CHECK(judge({off_path(q, w.kb), hop(q, 0), answer(q.gold_answer)}) == std::vector<Label>{B, G});
    CHECK(judge({answer(q.gold_answer)}).empty());
    // malformed turns are not judged
    CHECK(judge({{Token::tag(TokenKind::SearchOpen)}, hop(q, 0)}) == std::vector<Label>{G});
    // a search whose content is not (entity, relation) is Bad
    CHECK(judge({{Token::tag(TokenKind::SearchOpen), Token::tag(TokenKind::SearchClose)}}) == std::vector<Label>{B});

    World w2;
    w2.q = generate_question(w2.kb, 2, 9);
    const Question& q2 = w2.q;
    const auto t = play_actions(q2, w2.kb, w2.env, {hop(q2, 0), hop(q2, 1), hop(q2, 1), answer(q2.gold_answer)});
    CHECK(oracle_judge(t, q2, w2.kb).labels == std::vector<Label>{G, G, B});
}

TEST_CASE("oracle_judge properties") {
    World w;
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::vector<Token>> actions;
        for (int i = 0; i < 4; ++i) {
            const double u = rng.uniform01();
            if (u < 0.5) actions.push_back(hop(w.q, rng.uniform_index(3)));
            else actions.push_back(cstest::random_turn(rng, w.kb.vocabulary()));
        }
        const Trajectory t = play_actions(w.q, w.kb, w.env, actions);
        const auto v = oracle_judge(t, w.q, w.kb);
        CHECK(v.labels.size() == t.search_turn_count());
        CHECK(v.labels == oracle_judge(t, w.q, w.kb).labels);
        CHECK(v.source == CriticSource::Oracle);
    }

    // swapping a Good turn with its later duplicate moves the Bad label
    const Question& q = w.q;
    const auto a = oracle_judge(play_actions(q, w.kb, w.env, {hop(q, 0), off_path(q, w.kb), hop(q, 0)}), q, w.kb);
    const auto b = oracle_judge(play_actions(q, w.kb, w.env, {hop(q, 0), hop(q, 0), off_path(q, w.kb)}), q, w.kb);
    CHECK(a.labels == std::vector<Label>{G, B, B});
    CHECK(b.labels == std::vector<Label>{G, B, B});
    const auto c = oracle_judge(play_actions(q, w.kb, w.env, {hop(q, 1), hop(q, 0), hop(q, 1)}), q, w.kb);
    const auto d = oracle_judge(play_actions(q, w.kb, w.env, {hop(q, 1), hop(q, 1), hop(q, 0)}), q, w.kb);
    CHECK(c.labels == std::vector<Label>{G, G, B});
    CHECK(d.labels == std::vector<Label>{G, B, G});
}

TEST_CASE("mc_judge") {
    const KnowledgeBase kb = generate_kb(10, 3, 0.5, 21);
    const auto qs = generate_questions(kb, 2, 4, 3);
    const Question& q = qs[0];
    const EnvConfig env;
    const PolicyParams prior = protocol_prior(kb.vocabulary(), 4);
    const Trajectory gold = scripted_gold_trajectory(q, kb, env);
    CHECK(McOptions{}.n_rollouts == 10);

    // Brute-force rollouts after the first search reproduce 1,1,0,1,1,0,1,1,0,1.
    McOptions opt;
    opt.lambda_f = 1e-9;  // outcome dominates: rewards are 0 or 1 up to 1e-9
    const std::uint64_t seed = 170543;
    std::vector<int> outcomes;
    for (int j = 0; j < 10; ++j) {
        const Trajectory c = continue_trajectory(prior, q, kb, env, opt.sampling, gold, 1,
                                                 derive_seed({seed, 0, static_cast<std::uint64_t>(j)}));
        const double r = global_reward(c.extracted_answer, answer_text(q.gold_answer), check_format(c), opt.lambda_f);
        outcomes.push_back(r >= 0.5 ? 1 : 0);
    }
    CHECK(outcomes == std::vector<int>{1, 1, 0, 1, 1, 0, 1, 1, 0, 1});
    auto v = mc_judge(gold, prior, q, kb, env, opt, seed);
    REQUIRE(v.labels.size() == 2u);
    CHECK(std::abs(v.value_estimates[0] - 0.7) < 1e-8);
    CHECK(v.labels[0] == G);
    CHECK(v.source == CriticSource::MonteCarlo);
    opt.threshold = 0.71;
    CHECK(mc_judge(gold, prior, q, kb, env, opt, seed).labels[0] == B);

    // A greedy policy that finishes the gold path: every estimate is 1.
    PolicyParams perfect(kb.vocabulary(), 4);
    std::vector<Trajectory> demos(8, gold);
    std::vector<Question> dq(8, q);
    imitate(perfect, demos, dq, 0.5, 200);
    McOptions greedy;
    greedy.sampling.greedy = true;
    v = mc_judge(gold, perfect, q, kb, env, greedy, 1);
    for (double e : v.value_estimates) CHECK(e == 1.0);
    for (Label l : v.labels) CHECK(l == G);

    McOptions bad;
    bad.n_rollouts = 0;
    CHECK_THROWS_AS(mc_judge(gold, prior, q, kb, env, bad, 0), ConfigError);
}

TEST_CASE("mc_judge properties") {
    const KnowledgeBase kb = generate_kb(10, 3, 0.5, 21);
    const auto qs = generate_questions(kb, 2, 4, 3);
    const EnvConfig env;
    PolicyParams p = protocol_prior(kb.vocabulary(), 4);
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Question& q = qs[trial % qs.size()];
        const Trajectory t = sample_trajectory(p, q, kb, env, SamplingConfig{}, rng.next());
        McOptions opt;
        opt.n_rollouts = 4;
        const std::uint64_t seed = rng.next();
        opt.threshold = 0.3;
        const auto low = mc_judge(t, p, q, kb, env, opt, seed);
        opt.threshold = 0.6;
        const auto high = mc_judge(t, p, q, kb, env, opt, seed);
        CHECK(low.labels.size() == t.search_turn_count());
        CHECK(low.value_estimates == high.value_estimates);
        for (std::size_t i = 0; i < low.labels.size(); ++i) {
            if (low.labels[i] == B) CHECK(high.labels[i] == B);
        }
    }
}

TEST_CASE("remote_judge against the mock server") {
    MockCriticServer server;
    auto cfg = endpoint(server);

    server.push_content("Both searches help. <score>1, 1</score>");
    auto v = remote_judge(cfg, "prompt text", 2);
    CHECK(v.parse_ok);
    CHECK(v.labels == std::vector<Label>{G, G});
    CHECK(v.source == CriticSource::Remote);
    REQUIRE(server.requests() == 1u);
    const auto body = nlohmann::json::parse(server.bodies()[0]);
    CHECK(body.at("model") == "critic-test");
    CHECK(body.at("temperature") == 0.0);
    CHECK(body.at("messages").size() == 1u);
    CHECK(body.at("messages")[0].at("role") == "user");
    CHECK(body.at("messages")[0].at("content") == "prompt text");
    CHECK(server.auth_headers()[0] == "Bearer secret");

    // malformed twice, then valid: the third attempt wins
    server.push_content("I cannot decide.");
    server.push_content("<score>1, x</score>");
    server.push_content("<score>0, 1</score>");
    v = remote_judge(cfg, "p", 2);
    CHECK(v.parse_ok);
    CHECK(v.labels == std::vector<Label>{B, G});
    CHECK(server.requests() == 4u);

    // HTTP errors are retried too
    server.push(MockCriticServer::Reply{500, "", "oops"});
    server.push_content("<score>1</score>");
    v = remote_judge(cfg, "p", 1);
    CHECK(v.labels == std::vector<Label>{G});

    // every response unparseable: parse_ok false, no labels, raw text kept
    for (int i = 0; i < 3; ++i) server.push_content("<score>1</score>");
    v = remote_judge(cfg, "p", 2);
    CHECK_FALSE(v.parse_ok);
    CHECK(v.labels.empty());
    CHECK(v.raw_text == std::optional<std::string>("<score>1</score>"));
}

TEST_CASE("remote_judge error paths") {
    CriticEndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:1/v1";
    cfg.timeout = std::chrono::milliseconds(500);
    cfg.retry_backoff = std::chrono::milliseconds(1);
    CHECK_THROWS_AS(remote_judge(cfg, "p", 1), EndpointError);

    MockCriticServer server;
    auto ok = endpoint(server);
    for (int i = 0; i < 3; ++i) server.push(MockCriticServer::Reply{503, "", "busy"});
    CHECK_THROWS_AS(remote_judge(ok, "p", 1), EndpointError);
    CHECK(server.requests() == 3u);

    ok.max_retries = -1;
    CHECK_THROWS_AS(remote_judge(ok, "p", 1), ConfigError);
    cfg.base_url = "no-scheme";
    CHECK_THROWS_AS(remote_judge(cfg, "p", 1), ConfigError);
}

TEST_CASE("remote_judge_batch keeps order and bounds concurrency") {
    MockCriticServer server;
    server.set_delay(std::chrono::milliseconds(20));
    server.set_fallback(MockCriticServer::Reply{200, "<score>1, 0</score>", {}});
    auto cfg = endpoint(server);
    cfg.max_in_flight = 3;
    std::vector<std::string> prompts;
    std::vector<int> expected;
    for (int i = 0; i < 12; ++i) {
        prompts.push_back("prompt " + std::to_string(i));
        expected.push_back(2);
    }
    const auto out = remote_judge_batch(cfg, prompts, expected);
    REQUIRE(out.size() == 12u);
    for (const auto& v : out) CHECK(v.labels == std::vector<Label>{G, B});
    CHECK(server.max_in_flight() <= 3);
    CHECK(server.max_in_flight() >= 2);

    expected.pop_back();
    CHECK_THROWS_AS(remote_judge_batch(cfg, prompts, expected), ShapeError);
}

TEST_CASE("label agreement") {
    CHECK(label_agreement(std::vector<Label>{G, B, G}, std::vector<Label>{G, G, G}) == doctest::Approx(2.0 / 3));
    CHECK(label_agreement(std::vector<Label>{G, B}, std::vector<Label>{G, B}) == 1.0);
    CHECK_THROWS_AS(label_agreement(std::vector<Label>{G}, std::vector<Label>{G, B}), ShapeError);

    // A corpus with redundant searches: outcome labels mark repeats Good on
    // correct episodes, the oracle marks them Bad.
    World w;
    const Question& q = w.q;
    std::vector<Trajectory> corpus = {
        play_actions(q, w.kb, w.env, {hop(q, 0), hop(q, 0), hop(q, 1), answer(q.gold_answer)}),
        play_actions(q, w.kb, w.env, {hop(q, 0), hop(q, 1), hop(q, 2), answer(q.gold_answer)}),
        play_actions(q, w.kb, w.env, {off_path(q, w.kb), hop(q, 0), answer(q.gold_answer)}),
    };
    std::vector<std::vector<Label>> oracle, outcome;
    for (const Trajectory& t : corpus) {
        oracle.push_back(oracle_judge(t, q, w.kb).labels);
        outcome.push_back(outcome_labels(t, q));
    }
    CHECK(label_agreement(oracle, oracle) == 1.0);
    const double agree = label_agreement(oracle, outcome);
    CHECK(agree < 1.0);
    CHECK(agree == doctest::Approx(6.0 / 8));  // pooled over eight turns
}

TEST_CASE("verdict records") {
    CritiqueVerdict v;
    v.labels = {G, B};
    v.source = CriticSource::MonteCarlo;
    const auto j = verdict_to_json(v, "q3");
    CHECK(j.at("question_id") == "q3");
    const auto back = verdict_from_json(j);
    CHECK(back.labels == v.labels);
    CHECK(back.source == v.source);
    CHECK(back.parse_ok);

    const auto path = std::filesystem::temp_directory_path() / "criticsearch_verdicts_test.jsonl";
    {
        std::ofstream out(path);
        out << j.dump() << '\n' << verdict_to_json(CritiqueVerdict{}, "q4").dump() << '\n';
    }
    const auto recs = read_verdicts(path.string());
    REQUIRE(recs.size() == 2u);
    CHECK(recs[1].question_id == "q4");
    std::filesystem::remove(path);

    CHECK(critic_source_from_name("mc") == CriticSource::MonteCarlo);
    CHECK(critic_source_from_name(critic_source_name(CriticSource::Remote)) == CriticSource::Remote);
    CHECK_THROWS_AS(critic_source_from_name("human"), ConfigError);
}
