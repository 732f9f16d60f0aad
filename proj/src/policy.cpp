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

#include "criticsearch/policy.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "criticsearch/errors.hpp"
#include "criticsearch/rng.hpp"
#include "criticsearch/simd/kernels.hpp"

namespace criticsearch {

FeatureLayout::FeatureLayout(const Vocabulary& vocab, int max_turns)
    : vocab_size_(vocab.size()),
      max_turns_(max_turns),
      num_entities_(vocab.num_entities()),
      num_relations_(vocab.num_relations()) {
    if (max_turns < 1) throw ConfigError("max_turns must be >= 1");
}

std::vector<double> FeatureVector::dense() const {
    std::vector<double> out(dimension, 0.0);
    for (auto f : active) out[f] = 1.0;
    return out;
}

PolicyParams::PolicyParams(Vocabulary vocab, int max_turns)
    : vocab_(vocab), layout_(vocab, max_turns), weights_(layout_.vocab_size() * layout_.dimension(), 0.0) {}

bool PolicyParams::all_finite() const {
    return std::all_of(weights_.begin(), weights_.end(), [](double w) { return std::isfinite(w); });
}

namespace {

std::size_t token_index(const FeatureLayout& layout, const Token& t) {
    switch (t.kind) {
        case TokenKind::Entity:
            if (t.id < 0 || t.id >= layout.num_entities()) throw ShapeError("entity " + std::to_string(t.id));
            return kNumTagTokens + static_cast<std::size_t>(t.id);
        case TokenKind::Relation:
            if (t.id < 0 || t.id >= layout.num_relations()) throw ShapeError("relation " + std::to_string(t.id));
            return kNumTagTokens + layout.num_entities() + static_cast<std::size_t>(t.id);
        default:
            return static_cast<std::size_t>(t.kind);
    }
}

bool history_has_repeat(std::span<const Turn> history) {
    std::vector<Query> seen;
    for (const Turn& turn : history) {
        if (turn.kind != TurnKind::Search) continue;
        const auto q = as_query(parse_turn_action(turn.action_tokens).content);
        if (!q) continue;
        if (std::find(seen.begin(), seen.end(), *q) != seen.end()) return true;
        seen.push_back(*q);
    }
    return false;
}

void softmax_from_logits(std::vector<double>& logits, double temperature, ActionDistribution& out) {
    const std::size_t n = logits.size();
    if (temperature != 1.0) simd::scale(logits, 1.0 / temperature);
    for (double z : logits) {
        if (!std::isfinite(z)) throw NumericalError("non-finite logit");
    }
    out.probs.resize(n);
    out.logprobs.resize(n);
    const double m = simd::max(logits);
    const double sum = simd::exp_shifted(logits, m, out.probs);
    simd::scale(out.probs, 1.0 / sum);
    const double log_norm = m + std::log(sum);
    for (std::size_t v = 0; v < n; ++v) out.logprobs[v] = logits[v] - log_norm;
}

std::size_t draw(const std::vector<double>& probs, Rng& rng, bool greedy) {
    if (greedy) return static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    const double u = rng.uniform01();
    double cum = 0.0;
    for (std::size_t v = 0; v < probs.size(); ++v) {
        cum += probs[v];
        if (u < cum) return v;
    }
    for (std::size_t v = probs.size(); v-- > 0;) {
        if (probs[v] > 0.0) return v;
    }
    return probs.size() - 1;
}

bool turn_complete(const std::vector<Token>& partial, int cap) {
    const Token& last = partial.back();
    if (last.kind == TokenKind::StopTurn) return true;
    if (static_cast<int>(partial.size()) >= cap) return true;
    if (last.kind == TokenKind::SearchClose || last.kind == TokenKind::AnswerClose) {
        return parse_turn_action(partial).kind != TurnKind::Malformed;
    }
    return false;
}

void check_same_shape(const PolicyParams& a, const PolicyParams& b) {
    if (!a.same_shape(b)) throw ShapeError("policy parameter shapes differ");
}

}  // namespace

FeatureVector featurize(const FeatureLayout& layout, const Question& question, std::span<const Turn> history,
                        std::span<const Token> partial_turn) {
    FeatureVector fv;
    fv.dimension = layout.dimension();
    auto& act = fv.active;
    act.reserve(16);

    const std::size_t last =
        partial_turn.empty() ? layout.turn_start_feature() : token_index(layout, partial_turn.back());
    act.push_back(static_cast<std::uint32_t>(layout.last_token_offset() + last));

    const std::size_t turn = std::min<std::size_t>(history.size(), static_cast<std::size_t>(layout.max_turns() - 1));
    act.push_back(static_cast<std::uint32_t>(layout.turn_offset() + turn));

    std::vector<bool> seen(static_cast<std::size_t>(layout.num_entities()), false);
    auto mark = [&](int e) {
        if (e < 0 || e >= layout.num_entities()) throw ShapeError("entity " + std::to_string(e));
        seen[static_cast<std::size_t>(e)] = true;
    };
    mark(question.source);
    for (const Turn& t : history) {
        if (!t.feedback) continue;
        for (const Document& d : *t.feedback) mark(d.triple.tail);
    }
    for (std::size_t e = 0; e < seen.size(); ++e) {
        if (seen[e]) act.push_back(static_cast<std::uint32_t>(layout.entity_offset() + e));
    }

    std::vector<bool> named(static_cast<std::size_t>(layout.num_relations()), false);
    for (int r : question.relation_chain) {
        if (r < 0 || r >= layout.num_relations()) throw ShapeError("relation " + std::to_string(r));
        named[static_cast<std::size_t>(r)] = true;
    }
    for (std::size_t r = 0; r < named.size(); ++r) {
        if (named[r]) act.push_back(static_cast<std::uint32_t>(layout.relation_offset() + r));
    }

    if (history_has_repeat(history)) act.push_back(static_cast<std::uint32_t>(layout.repeat_offset()));
    return fv;
}

void compute_logits(const PolicyParams& params, const FeatureVector& features, std::span<double> logits) {
    if (features.dimension != params.feature_dim() || logits.size() != params.vocab_size()) {
        throw ShapeError("feature/logit dimension mismatch");
    }
    std::fill(logits.begin(), logits.end(), 0.0);
    for (auto f : features.active) simd::add(logits, params.feature_column(f));
}

ActionDistribution action_distribution(const PolicyParams& params, const FeatureVector& features,
                                       double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    std::vector<double> logits(params.vocab_size());
    compute_logits(params, features, logits);
    ActionDistribution dist;
    softmax_from_logits(logits, temperature, dist);
    return dist;
}

Trajectory continue_trajectory(const PolicyParams& params, const Question& question, const KnowledgeBase& kb,
                               const EnvConfig& env, const SamplingConfig& sampling, const Trajectory& prefix,
                               std::size_t prefix_turns, std::uint64_t seed) {
    if (params.layout() != FeatureLayout(kb.vocabulary(), env.max_turns)) {
        throw ShapeError("policy layout does not match the environment");
    }
    if (prefix_turns > prefix.turns.size()) throw ConfigError("prefix_turns beyond the prefix");
    if (sampling.max_turn_tokens < 1) throw ConfigError("max_turn_tokens must be >= 1");

    Trajectory traj;
    traj.question_id = question.id;
    traj.seed = seed;
    std::size_t kept_tokens = 0;
    for (std::size_t t = 0; t < prefix_turns; ++t) {
        traj.turns.push_back(prefix.turns[t]);
        kept_tokens += prefix.turns[t].action_tokens.size();
    }
    traj.token_logprobs.assign(prefix.token_logprobs.begin(),
                               prefix.token_logprobs.begin() + static_cast<std::ptrdiff_t>(kept_tokens));

    Episode episode(kb, env, static_cast<int>(prefix_turns));
    bool done = episode.done() || (!traj.turns.empty() && traj.turns.back().kind == TurnKind::Answer);
    Rng rng(seed);
    std::vector<double> logits(params.vocab_size());
    ActionDistribution dist;
    while (!done) {
        std::vector<Token> partial;
        do {
            const FeatureVector fv = featurize(params.layout(), question, traj.turns, partial);
            compute_logits(params, fv, logits);
            softmax_from_logits(logits, sampling.temperature, dist);
            const std::size_t v = draw(dist.probs, rng, sampling.greedy);
            partial.push_back(params.vocabulary().token(v));
            traj.token_logprobs.push_back(dist.logprobs[v]);
        } while (!turn_complete(partial, sampling.max_turn_tokens));

        const TurnParse parse = parse_turn_action(partial);
        StepResult step = episode.step(parse);
        traj.turns.push_back(Turn{std::move(partial), std::move(step.feedback), parse.kind});
        done = step.done;
    }
    traj.terminated = episode.done() || (!traj.turns.empty() && traj.turns.back().kind == TurnKind::Answer);
    traj.extracted_answer = extract_answer(traj);
    return traj;
}

Trajectory sample_trajectory(const PolicyParams& params, const Question& question, const KnowledgeBase& kb,
                             const EnvConfig& env, const SamplingConfig& sampling, std::uint64_t seed) {
    return continue_trajectory(params, question, kb, env, sampling, Trajectory{}, 0, seed);
}

std::vector<TokenState> trajectory_states(const FeatureLayout& layout, const Trajectory& traj,
                                          const Question& question) {
    std::vector<TokenState> states;
    states.reserve(traj.action_token_count());
    const std::span<const Turn> turns(traj.turns);
    for (std::size_t t = 0; t < turns.size(); ++t) {
        const auto& tokens = turns[t].action_tokens;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            TokenState s;
            s.features = featurize(layout, question, turns.first(t), std::span<const Token>(tokens).first(i));
            s.token = token_index(layout, tokens[i]);
            s.turn = t;
            states.push_back(std::move(s));
        }
    }
    return states;
}

LogprobGrad logprob_and_grad(const PolicyParams& params, const Trajectory& traj, const Question& question,
                             double temperature) {
    const auto states = trajectory_states(params.layout(), traj, question);
    LogprobGrad out;
    out.logprobs.reserve(states.size());
    out.grads.reserve(states.size());
    for (const TokenState& s : states) {
        const ActionDistribution dist = action_distribution(params, s.features, temperature);
        out.logprobs.push_back(dist.logprobs[s.token]);
        TokenGradient g;
        g.features = s.features;
        g.coeff.resize(dist.probs.size());
        for (std::size_t v = 0; v < dist.probs.size(); ++v) {
            g.coeff[v] = ((v == s.token ? 1.0 : 0.0) - dist.probs[v]) / temperature;
        }
        out.grads.push_back(std::move(g));
    }
    return out;
}

void accumulate_outer(PolicyParams& grad, std::span<const double> coeff, const FeatureVector& features,
                      double scale) {
    if (coeff.size() != grad.vocab_size() || features.dimension != grad.feature_dim()) {
        throw ShapeError("gradient accumulation shape mismatch");
    }
    for (auto f : features.active) simd::axpy(grad.feature_column(f), scale, coeff);
}

double kl_exact(const PolicyParams& params, const PolicyParams& ref, std::span<const FeatureVector> states) {
    check_same_shape(params, ref);
    if (states.empty()) return 0.0;
    double total = 0.0;
    std::vector<double> diff(params.vocab_size());
    for (const FeatureVector& s : states) {
        const auto p = action_distribution(params, s);
        const auto q = action_distribution(ref, s);
        for (std::size_t v = 0; v < diff.size(); ++v) diff[v] = p.logprobs[v] - q.logprobs[v];
        // Gibbs: non-negative up to rounding.
        total += std::max(0.0, simd::dot(p.probs, diff));
    }
    const double kl = total / static_cast<double>(states.size());
    if (!std::isfinite(kl)) throw NumericalError("non-finite KL");
    return kl;
}

double mean_entropy(const PolicyParams& params, std::span<const FeatureVector> states) {
    if (states.empty()) return 0.0;
    double total = 0.0;
    for (const FeatureVector& s : states) {
        const auto p = action_distribution(params, s);
        total -= simd::dot(p.probs, p.logprobs);
    }
    return total / static_cast<double>(states.size());
}

RegularizerValue regularizers_with_grad(const PolicyParams& params, const PolicyParams& ref,
                                        std::span<const FeatureVector> states, double kl_scale,
                                        double entropy_scale, PolicyParams& grad) {
    check_same_shape(params, ref);
    check_same_shape(params, grad);
    RegularizerValue value;
    if (states.empty()) return value;
    const double inv_n = 1.0 / static_cast<double>(states.size());
    const std::size_t n = params.vocab_size();
    std::vector<double> diff(n), coeff(n);
    for (const FeatureVector& s : states) {
        const auto p = action_distribution(params, s);
        const auto q = action_distribution(ref, s);
        for (std::size_t v = 0; v < n; ++v) diff[v] = p.logprobs[v] - q.logprobs[v];
        const double kl_s = simd::dot(p.probs, diff);
        const double h_s = -simd::dot(p.probs, p.logprobs);
        value.kl += std::max(0.0, kl_s);
        value.entropy += h_s;
        // dKL/dz_v = p_v (d_v - KL);  dH/dz_v = -p_v (log p_v + H)
        for (std::size_t v = 0; v < n; ++v) {
            coeff[v] = kl_scale * p.probs[v] * (diff[v] - kl_s) - entropy_scale * p.probs[v] * (p.logprobs[v] + h_s);
        }
        accumulate_outer(grad, coeff, s, inv_n);
    }
    value.kl *= inv_n;
    value.entropy *= inv_n;
    if (!std::isfinite(value.kl) || !std::isfinite(value.entropy)) throw NumericalError("non-finite regularizer");
    return value;
}

PolicyParams protocol_prior(const Vocabulary& vocab, int max_turns, const PriorConfig& config) {
    PolicyParams p(vocab, max_turns);
    const FeatureLayout& L = p.layout();
    const double s = config.structure;
    const auto idx = [&](TokenKind k) { return static_cast<std::size_t>(k); };
    const auto last = [&](std::size_t token) { return L.last_token_offset() + token; };
    const std::size_t start = L.turn_start_feature();
    const std::size_t final_turn = L.turn_offset() + static_cast<std::size_t>(max_turns - 1);

    const double a = config.answer_bias;
    p.weight(idx(TokenKind::SearchOpen), start) += s;
    p.weight(idx(TokenKind::AnswerOpen), start) += s - a;
    p.weight(idx(TokenKind::AnswerOpen), final_turn) += 2.0 * a;
    // On the last turn </answer> must beat the copied relations after the
    // answer entity, but not open a turn.
    p.weight(idx(TokenKind::AnswerClose), final_turn) += config.copy + 2.0 * a;
    p.weight(idx(TokenKind::AnswerClose), start) -= config.copy + 2.0 * a;
    for (int e = 0; e < vocab.num_entities(); ++e) {
        const std::size_t ent = vocab.entity_index(e);
        p.weight(ent, last(idx(TokenKind::SearchOpen))) += s;
        p.weight(ent, last(idx(TokenKind::AnswerOpen))) += s;
        p.weight(ent, L.entity_offset() + static_cast<std::size_t>(e)) += config.copy;
        p.weight(idx(TokenKind::AnswerClose), last(ent)) += s;
        for (int r = 0; r < vocab.num_relations(); ++r) p.weight(vocab.relation_index(r), last(ent)) += s;
    }
    for (int r = 0; r < vocab.num_relations(); ++r) {
        const std::size_t rel = vocab.relation_index(r);
        p.weight(idx(TokenKind::SearchClose), last(rel)) += s;
        p.weight(rel, L.relation_offset() + static_cast<std::size_t>(r)) += config.copy;
    }
    return p;
}

void imitate(PolicyParams& params, std::span<const Trajectory> demos, std::span<const Question> questions,
             double learning_rate, int epochs) {
    if (demos.size() != questions.size()) throw ShapeError("one question per demonstration");
    for (int epoch = 0; epoch < epochs; ++epoch) {
        PolicyParams grad(params.vocabulary(), params.layout().max_turns());
        for (std::size_t i = 0; i < demos.size(); ++i) {
            const auto lg = logprob_and_grad(params, demos[i], questions[i]);
            for (const auto& g : lg.grads) accumulate_outer(grad, g.coeff, g.features, 1.0);
        }
        simd::axpy(params.flat(), learning_rate, grad.flat());
    }
}

void write_policy(std::ostream& out, const PolicyParams& params) {
    out << "policy v1 " << params.vocab_size() << ' ' << params.feature_dim() << '\n';
    char buf[32];
    for (std::size_t v = 0; v < params.vocab_size(); ++v) {
        for (std::size_t f = 0; f < params.feature_dim(); ++f) {
            std::snprintf(buf, sizeof buf, "%.17g", params.weight(v, f));
            if (f > 0) out << ' ';
            out << buf;
        }
        out << '\n';
    }
}

PolicyParams read_policy(std::istream& in, const Vocabulary& vocab, int max_turns) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty policy file");
    std::istringstream header(line);
    std::string magic, version;
    std::size_t v_dim = 0, f_dim = 0;
    if (!(header >> magic >> version >> v_dim >> f_dim) || magic != "policy" || version != "v1") {
        throw FormatError("policy header must be 'policy v1 <V> <D>'");
    }
    PolicyParams params(vocab, max_turns);
    if (v_dim != params.vocab_size() || f_dim != params.feature_dim()) {
        throw ShapeError("checkpoint is " + std::to_string(v_dim) + "x" + std::to_string(f_dim) + ", expected " +
                         std::to_string(params.vocab_size()) + "x" + std::to_string(params.feature_dim()));
    }
    for (std::size_t v = 0; v < v_dim; ++v) {
        if (!std::getline(in, line)) throw FormatError("policy file truncated at row " + std::to_string(v));
        const char* p = line.c_str();
        for (std::size_t f = 0; f < f_dim; ++f) {
            char* end = nullptr;
            errno = 0;
            const double w = std::strtod(p, &end);
            if (end == p) throw FormatError("bad weight at row " + std::to_string(v));
            params.weight(v, f) = w;
            p = end;
        }
        while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
        if (*p != '\0') throw FormatError("extra values at row " + std::to_string(v));
    }
    if (!params.all_finite()) throw NumericalError("non-finite weight in checkpoint");
    return params;
}

void save_policy(const std::string& path, const PolicyParams& params) {
    std::ofstream out(path);
    if (!out) throw RunError("cannot write " + path);
    write_policy(out, params);
    if (!out) throw RunError("write failed for " + path);
}

PolicyParams load_policy(const std::string& path, const Vocabulary& vocab, int max_turns) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open " + path);
    return read_policy(in, vocab, max_turns);
}

}  // namespace criticsearch
