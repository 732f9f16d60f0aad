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

// Token-level log-linear policy: pi(v | s) = softmax(W phi(s) / tau) over the
// vocabulary, with indicator features phi(s) of the episode so far.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "criticsearch/env.hpp"
#include "criticsearch/tir.hpp"

namespace criticsearch {

// Feature blocks, in order:
//   last emitted token one-hot       V + 1 (index V = turn start)
//   turn index one-hot               T_max (capped at T_max - 1)
//   entity seen flags                E     (question entity + feedback tails)
//   relation named in question       R
//   any repeated query in history    1
class FeatureLayout {
public:
    FeatureLayout() = default;
    FeatureLayout(const Vocabulary& vocab, int max_turns);

    std::size_t vocab_size() const { return vocab_size_; }
    int max_turns() const { return max_turns_; }
    int num_entities() const { return num_entities_; }
    int num_relations() const { return num_relations_; }
    std::size_t dimension() const { return repeat_offset() + 1; }

    std::size_t last_token_offset() const { return 0; }
    std::size_t turn_start_feature() const { return vocab_size_; }
    std::size_t turn_offset() const { return vocab_size_ + 1; }
    std::size_t entity_offset() const { return turn_offset() + max_turns_; }
    std::size_t relation_offset() const { return entity_offset() + num_entities_; }
    std::size_t repeat_offset() const { return relation_offset() + num_relations_; }

    friend bool operator==(const FeatureLayout&, const FeatureLayout&) = default;

private:
    std::size_t vocab_size_ = 0;
    int max_turns_ = 0;
    int num_entities_ = 0;
    int num_relations_ = 0;
};

// Sparse indicator vector: sorted active indices, every active entry is 1.
struct FeatureVector {
    std::vector<std::uint32_t> active;
    std::size_t dimension = 0;

    std::vector<double> dense() const;
    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

class PolicyParams {
public:
    PolicyParams() = default;
    // Zero weights.
    PolicyParams(Vocabulary vocab, int max_turns);

    const Vocabulary& vocabulary() const { return vocab_; }
    const FeatureLayout& layout() const { return layout_; }
    std::size_t vocab_size() const { return layout_.vocab_size(); }
    std::size_t feature_dim() const { return layout_.dimension(); }
    std::size_t size() const { return weights_.size(); }

    // Logical (token, feature) view. Storage is feature-major so that the
    // V weights of one feature are contiguous.
    double weight(std::size_t token, std::size_t feature) const { return weights_[feature * vocab_size() + token]; }
    double& weight(std::size_t token, std::size_t feature) { return weights_[feature * vocab_size() + token]; }

    std::span<const double> feature_column(std::size_t feature) const {
        return {weights_.data() + feature * vocab_size(), vocab_size()};
    }
    std::span<double> feature_column(std::size_t feature) {
        return {weights_.data() + feature * vocab_size(), vocab_size()};
    }

    std::span<const double> flat() const { return weights_; }
    std::span<double> flat() { return weights_; }

    bool all_finite() const;
    bool same_shape(const PolicyParams& other) const {
        return vocab_ == other.vocab_ && layout_ == other.layout_;
    }

    friend bool operator==(const PolicyParams&, const PolicyParams&) = default;

private:
    Vocabulary vocab_;
    FeatureLayout layout_;
    std::vector<double> weights_;
};

FeatureVector featurize(const FeatureLayout& layout, const Question& question, std::span<const Turn> history,
                        std::span<const Token> partial_turn);

// logits[v] = sum over active features f of W[v, f].
void compute_logits(const PolicyParams& params, const FeatureVector& features, std::span<double> logits);

struct ActionDistribution {
    std::vector<double> probs;
    std::vector<double> logprobs;
};

// softmax(W phi / temperature). Throws NumericalError on non-finite logits
// and ConfigError on temperature <= 0.
ActionDistribution action_distribution(const PolicyParams& params, const FeatureVector& features,
                                       double temperature = 1.0);

struct SamplingConfig {
    double temperature = 1.0;
    bool greedy = false;       // argmax, ties to the lowest index
    int max_turn_tokens = 8;   // per-turn action token cap
};

// Samples turns until the episode ends. A turn ends at StopTurn, at a closing
// tag that completes a parseable action, or at the token cap.
Trajectory sample_trajectory(const PolicyParams& params, const Question& question, const KnowledgeBase& kb,
                             const EnvConfig& env, const SamplingConfig& sampling, std::uint64_t seed);

// Continues from the first `prefix_turns` turns of `prefix` (their tokens and
// log-probabilities are kept) until the episode ends.
Trajectory continue_trajectory(const PolicyParams& params, const Question& question, const KnowledgeBase& kb,
                               const EnvConfig& env, const SamplingConfig& sampling, const Trajectory& prefix,
                               std::size_t prefix_turns, std::uint64_t seed);

// Policy state at one emitted action token.
struct TokenState {
    FeatureVector features;
    std::size_t token = 0;  // vocabulary index of the emitted token
    std::size_t turn = 0;
};

// One entry per action token, in order; feedback contributes nothing.
// Throws ShapeError when the trajectory uses tokens outside the layout.
std::vector<TokenState> trajectory_states(const FeatureLayout& layout, const Trajectory& traj,
                                          const Question& question);

// d log pi(token | s) / dW = coeff (x) features, coeff = (onehot - pi) / tau.
struct TokenGradient {
    FeatureVector features;
    std::vector<double> coeff;
};

struct LogprobGrad {
    std::vector<double> logprobs;
    std::vector<TokenGradient> grads;
};

LogprobGrad logprob_and_grad(const PolicyParams& params, const Trajectory& traj, const Question& question,
                             double temperature = 1.0);

// grad += scale * (coeff (x) features), with grad shaped like params.
void accumulate_outer(PolicyParams& grad, std::span<const double> coeff, const FeatureVector& features,
                      double scale);

// Mean over states of KL(pi_theta(.|s) || pi_ref(.|s)). Throws ShapeError on
// mismatched shapes and NumericalError on non-finite values.
double kl_exact(const PolicyParams& params, const PolicyParams& ref, std::span<const FeatureVector> states);

// Mean policy entropy over states.
double mean_entropy(const PolicyParams& params, std::span<const FeatureVector> states);

struct RegularizerValue {
    double kl = 0.0;
    double entropy = 0.0;
};

// Mean KL to ref and mean entropy over the states, adding
// kl_scale * dKL/dW + entropy_scale * dH/dW into grad.
RegularizerValue regularizers_with_grad(const PolicyParams& params, const PolicyParams& ref,
                                        std::span<const FeatureVector> states, double kl_scale,
                                        double entropy_scale, PolicyParams& grad);

// Initial ("base model") policy: knows the tag grammar, copies entities seen
// in the question or feedback and relations named in the question, and leans
// towards answering on the last turn. It knows nothing question specific.
struct PriorConfig {
    double structure = 12.0;
    double copy = 6.0;
    double answer_bias = 3.0;
};
PolicyParams protocol_prior(const Vocabulary& vocab, int max_turns, const PriorConfig& config = {});

// Behaviour cloning on demonstrations (gradient ascent on the summed
// log-likelihood of their action tokens).
void imitate(PolicyParams& params, std::span<const Trajectory> demos, std::span<const Question> questions,
             double learning_rate, int epochs);

// Checkpoint: "policy v1 <V> <D>" then V rows of D weights, %.17g.
void write_policy(std::ostream& out, const PolicyParams& params);
PolicyParams read_policy(std::istream& in, const Vocabulary& vocab, int max_turns);
void save_policy(const std::string& path, const PolicyParams& params);
PolicyParams load_policy(const std::string& path, const Vocabulary& vocab, int max_turns);

}  // namespace criticsearch
