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

// GRPO training with the hybrid advantage: grouped rollouts, reward
// breakdowns, the clipped objective with exact KL and entropy terms,
// collapse detection, metrics and checkpoints.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "criticsearch/credit.hpp"
#include "criticsearch/critic.hpp"
#include "criticsearch/env.hpp"
#include "criticsearch/policy.hpp"

namespace criticsearch {

struct TrainConfig {
    int G = 5;
    double alpha = 0.25;
    double lambda_f = 0.2;
    double beta = 1e-3;  // KL coefficient
    double eta = 1e-3;   // entropy coefficient
    double eps_clip = 0.2;
    double eps_turn = 1e-6;
    double std_floor = 1e-8;
    double learning_rate = 0.05;
    int M = 1;  // inner epochs per step
    int T_max = 4;
    int k_docs = 3;
    int batch_questions = 4;
    int total_steps = 200;
    std::uint64_t seed = 0;
    std::optional<CriticSource> critic_source = CriticSource::Oracle;  // nullopt: no turn critic

    double temperature = 1.0;
    int max_turn_tokens = 8;
    double warmup_fraction = 0.0;  // linear learning-rate warm-up over this share of total_steps
    int checkpoint_interval = 50;  // 0: final checkpoint only
    int collapse_window = 20;
    double kl_limit = 5.0;
    double grad_spike_factor = 10.0;
    int mc_rollouts = 10;
    double mc_threshold = 0.5;
    int threads = 1;
    bool log_rollouts = false;  // rollouts.jsonl in the run directory
    PriorConfig prior;
    CriticEndpointConfig endpoint;

    // Throws ConfigError on any out-of-range field.
    void validate() const;
    // alpha, or 0 when there is no turn critic.
    double effective_alpha() const { return critic_source ? alpha : 0.0; }
};

// Environment the trainer builds (or loads when the paths are set).
struct EnvSpec {
    int entities = 50;
    int relations = 8;
    double density = 0.3;
    int hops = 3;
    int num_questions = 8;
    std::uint64_t env_seed = 0;
    std::string kb_path;
    std::string questions_path;
};

struct Environment {
    KnowledgeBase kb;
    std::vector<Question> questions;
};

Environment build_environment(const EnvSpec& spec);
EnvConfig env_config(const TrainConfig& config, const EnvSpec& spec);

// Flat key=value config text; '#' starts a comment. Unknown keys throw
// ConfigError. Keys not present keep their defaults.
void parse_config(std::string_view text, TrainConfig& config, EnvSpec& env);
void load_config(const std::string& path, TrainConfig& config, EnvSpec& env);
std::string config_manifest(const TrainConfig& config, const EnvSpec& env);

struct StepMetrics {
    int step = 0;
    double mean_outcome_reward = 0.0;
    double valid_action_ratio = 0.0;
    double grad_norm = 0.0;
    double kl_value = 0.0;
    double entropy = 0.0;
    double em = 0.0;
    double f1 = 0.0;
    friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

struct GroupRollout {
    Question question;
    std::vector<Trajectory> trajectories;
    std::vector<RewardBreakdown> breakdowns;
};

// Well-formed turns over all turns (a search turn also needs feedback).
double valid_action_ratio(std::span<const Trajectory> trajectories);

// G trajectories from a params snapshot, trajectory i seeded with
// derive_seed({seed, i}); global rewards over the group, turn labels from the
// configured critic, and the hybrid token advantages.
GroupRollout rollout_group(const PolicyParams& params, const Question& question, const KnowledgeBase& kb,
                           const EnvConfig& env, const TrainConfig& config, std::uint64_t seed);

// Per-token data of a batch, evaluated once per step.
struct PreparedBatch {
    struct Sequence {
        std::size_t group = 0;
        std::vector<FeatureVector> features;
        std::vector<std::size_t> tokens;
        std::vector<double> old_logprobs;
        std::vector<double> advantages;
    };
    std::vector<Sequence> sequences;
    std::vector<FeatureVector> visited;  // every action-token state
    std::size_t num_groups = 0;
    std::vector<std::size_t> group_sizes;
};

PreparedBatch prepare_batch(std::span<const GroupRollout> groups, const PolicyParams& old_params,
                            const TrainConfig& config);

struct ObjectiveResult {
    double value = 0.0;
    double surrogate = 0.0;
    double kl = 0.0;
    double entropy = 0.0;
    PolicyParams gradient;
    double grad_norm = 0.0;
};

// J = mean over groups of (1/G) sum_i sum_t min(w A, clip(w, 1-eps, 1+eps) A)
//     - beta KL(pi || ref) + eta H(pi), with w = exp(log pi - log pi_old).
// Throws NumericalError naming the group on non-finite values.
ObjectiveResult grpo_objective(const PreparedBatch& batch, const PolicyParams& params,
                               const PolicyParams& ref_params, const TrainConfig& config);
ObjectiveResult grpo_objective(std::span<const GroupRollout> groups, const PolicyParams& params,
                               const PolicyParams& old_params, const PolicyParams& ref_params,
                               const TrainConfig& config);

// True when the kl of the whole trailing window exceeds kl_limit, or when the
// latest grad_norm exceeds grad_spike_factor times the median of the window
// before it (only once that window is full).
bool detect_collapse(std::span<const StepMetrics> history, int window, double kl_limit, double grad_spike_factor);
// Reason text for a collapse, empty when none.
std::string collapse_reason(std::span<const StepMetrics> history, int window, double kl_limit,
                            double grad_spike_factor);

struct TrainOptions {
    // Start from these weights (also used as the KL reference) instead of
    // the protocol prior.
    std::optional<PolicyParams> initial_params;
    // Continue from the newest checkpoint in run_dir when there is one.
    bool resume = false;
    // Stop after this step index even if total_steps is larger (for tests
    // that interrupt a run); -1 means no limit.
    int stop_after = -1;
};

struct TrainResult {
    PolicyParams params;
    std::vector<StepMetrics> metrics;
    bool collapsed = false;
    std::string stop_reason;  // "completed", "collapse: ..." or "interrupted"
};

// Writes run_dir/config, run_dir/metrics.csv, run_dir/ref.policy,
// run_dir/ckpt_<steps>.policy and run_dir/status. Throws RunError on I/O
// failures.
TrainResult train_loop(const TrainConfig& config, const EnvSpec& env_spec, const std::filesystem::path& run_dir,
                       const TrainOptions& options = {});

// Training steps against an already built environment.
TrainResult train_loop(const TrainConfig& config, const EnvSpec& env_spec, const Environment& env,
                       const std::filesystem::path& run_dir, const TrainOptions& options = {});

std::string metrics_header();
std::string metrics_row(const StepMetrics& m);
std::vector<StepMetrics> read_metrics(const std::string& path);

// Runs fn(i) for i in [0, n) on up to `threads` threads.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace criticsearch
