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

// Evaluation reports and the paired-seed convergence comparisons.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "criticsearch/eval.hpp"
#include "criticsearch/trainer.hpp"

namespace criticsearch {

struct EvalReport {
    std::string dataset_id;
    int num_questions = 0;
    double em = 0.0;
    double f1 = 0.0;
    double mean_turns = 0.0;
};

// Greedy decoding on every question.
EvalReport evaluate(const PolicyParams& params, std::span<const Question> questions, const KnowledgeBase& kb,
                    const EnvConfig& env, std::string dataset_id, int max_turn_tokens = 8);
EvalReport evaluate_trajectories(std::span<const Trajectory> trajectories, std::span<const Question> questions,
                                 std::string dataset_id);
nlohmann::json eval_report_to_json(const EvalReport& report);

struct ConvergencePoint {
    int steps = 0;       // first step count at which the threshold was met
    bool censored = false;
};

// steps = index of the first row with mean_outcome_reward >= threshold, plus
// one; censored at total_steps when no row qualifies.
ConvergencePoint steps_to_threshold(std::span<const StepMetrics> metrics, double threshold, int total_steps);

struct NamedConfig {
    std::string name;
    TrainConfig config;
};

struct ComparisonRow {
    std::string config;
    std::uint64_t seed = 0;
    ConvergencePoint point;
    std::string stop_reason;
    std::vector<StepMetrics> metrics;
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;      // config-major, then seed order
    std::vector<std::string> configs;
    std::vector<double> median_steps;      // per config, censored runs count as total_steps
    // For two configs: seeds where the first needed strictly fewer steps.
    int wins_first = 0;
    int wins_second = 0;
    int ties = 0;
};

// Trains every config on seeds config.seed + {0, ..., n_seeds - 1} (paired
// across configs) in out_dir/<name>_seed<k>, then writes
// out_dir/comparison.csv (config,seed,steps_to_threshold,censored) and
// out_dir/convergence.svg. Runs execute on up to `parallel_runs` threads.
ComparisonReport compare_configs(std::span<const NamedConfig> configs, const EnvSpec& env, int n_seeds,
                                 double success_threshold, const std::filesystem::path& out_dir,
                                 int parallel_runs = 1);

ComparisonReport compare_convergence(const NamedConfig& a, const NamedConfig& b, const EnvSpec& env, int n_seeds,
                                     double success_threshold, const std::filesystem::path& out_dir,
                                     int parallel_runs = 1);

// One config per alpha ("alpha=<value>"), otherwise identical to base.
ComparisonReport sweep_alpha(const TrainConfig& base, std::span<const double> alphas, const EnvSpec& env,
                             int n_seeds, double success_threshold, const std::filesystem::path& out_dir,
                             int parallel_runs = 1);

std::string comparison_csv(const ComparisonReport& report);
// Mean outcome reward per step, one polyline per run, coloured by config.
std::string convergence_svg(const ComparisonReport& report, double success_threshold);

}  // namespace criticsearch
