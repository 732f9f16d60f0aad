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

// Reward and advantage algebra: the four-case outcome reward, group
// normalization, critic turn rewards, turn advantages and the per-token
// hybrid advantage.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "criticsearch/tir.hpp"

namespace criticsearch {

enum class Label : std::uint8_t { Good, Bad };

std::string_view label_name(Label label);
// Throws FormatError.
Label label_from_name(std::string_view name);

struct RewardBreakdown {
    bool outcome_correct = false;
    bool format_ok = false;
    double global_reward = 0.0;
    double global_advantage = 0.0;
    std::vector<Label> turn_labels;       // one per valid search turn
    std::vector<int> turn_rewards;
    std::vector<double> turn_advantages;
    std::vector<double> token_advantages;  // one per action token
};

// 1, 1 - lambda_f, lambda_f or 0 by (correct, formatted). Correct means a
// normalized exact match. Throws ConfigError unless 0 < lambda_f < 0.5.
double global_reward(const std::optional<std::string>& extracted_answer, std::string_view gold, bool format_ok,
                     double lambda_f);

// (r - mean) / std with the population std; all zeros when std < std_floor.
// Throws ConfigError when fewer than two rewards are given.
std::vector<double> global_advantages(std::span<const double> rewards, double std_floor);

std::vector<int> turn_rewards(std::span<const Label> labels);

// r_t / (sum r + eps). Throws ConfigError when eps <= 0.
std::vector<double> turn_advantages(std::span<const int> rewards, double eps);

// alpha * A_turn + (1 - alpha) * A_global for every action token; tokens of
// non-search turns use A_turn = 0. Throws ShapeError when turn_adv does not
// have one entry per search turn, ConfigError when alpha is outside [0, 1].
std::vector<double> hybrid_token_advantages(const Trajectory& traj, double global_adv,
                                            std::span<const double> turn_adv, double alpha);

// Fills the turn and token fields of a breakdown whose global fields are set.
void assign_turn_credit(RewardBreakdown& breakdown, const Trajectory& traj, std::vector<Label> labels,
                        double alpha, double eps_turn);

nlohmann::json breakdown_to_json(const RewardBreakdown& breakdown);

}  // namespace criticsearch
