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

// Per-search-turn Good/Bad verdicts: a privileged oracle, Monte-Carlo
// forward rollouts and a remote chat-completion endpoint. Also the critique
// prompt, the <score> parser and label agreement.

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "criticsearch/credit.hpp"
#include "criticsearch/env.hpp"
#include "criticsearch/policy.hpp"
#include "criticsearch/tir.hpp"

namespace criticsearch {

enum class CriticSource : std::uint8_t { Oracle, MonteCarlo, Remote };

std::string_view critic_source_name(CriticSource source);
// Accepts "Oracle"/"MonteCarlo"/"Remote" and the CLI spellings
// "oracle"/"mc"/"remote". Throws ConfigError.
CriticSource critic_source_from_name(std::string_view name);

struct CritiqueVerdict {
    std::vector<Label> labels;  // one per valid search turn
    CriticSource source = CriticSource::Oracle;
    std::optional<std::string> raw_text;
    bool parse_ok = true;
    std::vector<double> value_estimates;  // MonteCarlo only, one per label
};

struct CriticEndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8000/v1
    std::string model_name;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 2;
    int max_in_flight = 4;
    std::chrono::milliseconds retry_backoff{200};  // doubled after each failed attempt
    // Bearer token; empty means read CRITIC_API_KEY at request time.
    std::string api_key;
    double temperature = 0.0;
};

// The critique template with its three slots filled. The solution string is
// "Question: <question>\n" followed by the rendered trajectory.
std::string build_critique_prompt(std::string_view question, std::string_view rendered_trajectory,
                                  std::string_view gold_answer, std::string_view extracted_answer,
                                  bool include_gold = true);

// "<score>1, 0</score>"
std::string format_scores(std::span<const Label> labels);

// Last <score>...</score> span, comma separated "1"/"0" entries. Throws
// MissingScore, BadToken or CountMismatch.
std::vector<Label> parse_scores(std::string_view critique_text, int expected_n);

// Good iff the turn queries a gold-path (head, relation) pair that no earlier
// turn queried. Repeats, off-path queries, queries that are not exactly
// (entity, relation) and searches after every gold hop was gathered are Bad.
CritiqueVerdict oracle_judge(const Trajectory& traj, const Question& question, const KnowledgeBase& kb);

// Every search turn inherits the trajectory outcome (Good iff the extracted
// answer is correct).
std::vector<Label> outcome_labels(const Trajectory& traj, const Question& question);

struct McOptions {
    int n_rollouts = 10;
    double threshold = 0.5;
    double lambda_f = 0.2;
    SamplingConfig sampling;
};

// For each valid search turn, resumes n_rollouts episodes right after that
// turn under params and averages their global rewards; Good iff the mean
// reaches the threshold. Rollout j after turn t uses seed (seed, t, j).
CritiqueVerdict mc_judge(const Trajectory& traj, const PolicyParams& params, const Question& question,
                         const KnowledgeBase& kb, const EnvConfig& env, const McOptions& options,
                         std::uint64_t seed);

// POSTs the prompt to {base_url}/chat/completions and parses the first
// choice's content, with up to max_retries further attempts on transport or
// parse failure. parse_ok=false (no labels) when every response failed to
// parse; EndpointError when no attempt produced a response.
CritiqueVerdict remote_judge(const CriticEndpointConfig& config, std::string_view prompt, int expected_n);

// remote_judge over many prompts with at most max_in_flight requests open.
// Results are in input order.
std::vector<CritiqueVerdict> remote_judge_batch(const CriticEndpointConfig& config,
                                                std::span<const std::string> prompts,
                                                std::span<const int> expected_n);

// Prompt for one trajectory, rendered with serialize_trajectory.
std::string critique_prompt_for(const Trajectory& traj, const Question& question, const KnowledgeBase& kb,
                                bool include_gold = true);

// Fraction of matching positions. Throws ShapeError on length mismatch;
// two empty sequences agree fully.
double label_agreement(std::span<const Label> a, std::span<const Label> b);
// Pooled over all turns of a trajectory set (micro average).
double label_agreement(std::span<const std::vector<Label>> a, std::span<const std::vector<Label>> b);

// Verdict JSONL record: {question_id, source, labels, parse_ok}.
nlohmann::json verdict_to_json(const CritiqueVerdict& verdict, std::string_view question_id);
CritiqueVerdict verdict_from_json(const nlohmann::json& record);
struct VerdictRecord {
    std::string question_id;
    CritiqueVerdict verdict;
};
std::vector<VerdictRecord> read_verdicts(const std::string& path);

}  // namespace criticsearch
