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


#include "criticsearch/credit.hpp"

#include <cmath>

#include "criticsearch/errors.hpp"
#include "criticsearch/eval.hpp"

namespace criticsearch {

std::string_view label_name(Label label) { return label == Label::Good ? "Good" : "Bad"; }

Label label_from_name(std::string_view name) {
    if (name == "Good") return Label::Good;
    if (name == "Bad") return Label::Bad;
    throw FormatError("unknown label '" + std::string(name) + "'");
}

double global_reward(const std::optional<std::string>& extracted_answer, std::string_view gold, bool format_ok,
                     double lambda_f) {
    if (!(lambda_f > 0.0 && lambda_f < 0.5)) throw ConfigError("lambda_f must lie in (0, 0.5)");
    const bool correct = extracted_answer && eval_em(*extracted_answer, gold) == 1;
    if (correct) return format_ok ? 1.0 : 1.0 - lambda_f;
    return format_ok ? lambda_f : 0.0;
}

std::vector<double> global_advantages(std::span<const double> rewards, double std_floor) {
    if (rewards.size() < 2) throw ConfigError("group size must be >= 2");
    const double n = static_cast<double>(rewards.size());
    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sd = std::sqrt(var / n);
    std::vector<double> out(rewards.size(), 0.0);
    if (sd < std_floor) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / sd;
    return out;
}

std::vector<int> turn_rewards(std::span<const Label> labels) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (Label l : labels) out.push_back(l == Label::Good ? 1 : 0);
    return out;
}

std::vector<double> turn_advantages(std::span<const int> rewards, double eps) {
    if (!(eps > 0.0)) throw ConfigError("turn epsilon must be > 0");
    double total = 0.0;
    for (int r : rewards) total += r;
    std::vector<double> out;
    out.reserve(rewards.size());
    for (int r : rewards) out.push_back(r / (total + eps));
    return out;
}

std::vector<double> hybrid_token_advantages(const Trajectory& traj, double global_adv,
                                            std::span<const double> turn_adv, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (turn_adv.size() != traj.search_turn_count()) {
        throw ShapeError("expected " + std::to_string(traj.search_turn_count()) + " turn advantages, got " +
                         std::to_string(turn_adv.size()));
    }
    std::vector<double> out;
    out.reserve(traj.action_token_count());
    std::size_t search = 0;
    for (const Turn& turn : traj.turns) {
        const double a_turn = turn.kind == TurnKind::Search ? turn_adv[search++] : 0.0;
        const double value = alpha * a_turn + (1.0 - alpha) * global_adv;
        out.insert(out.end(), turn.action_tokens.size(), value);
    }
    return out;
}

void assign_turn_credit(RewardBreakdown& breakdown, const Trajectory& traj, std::vector<Label> labels,
                        double alpha, double eps_turn) {
    breakdown.turn_labels = std::move(labels);
    breakdown.turn_rewards = turn_rewards(breakdown.turn_labels);
    breakdown.turn_advantages = turn_advantages(breakdown.turn_rewards, eps_turn);
    breakdown.token_advantages =
        hybrid_token_advantages(traj, breakdown.global_advantage, breakdown.turn_advantages, alpha);
}

nlohmann::json breakdown_to_json(const RewardBreakdown& b) {
    nlohmann::json labels = nlohmann::json::array();
    for (Label l : b.turn_labels) labels.push_back(label_name(l));
    return {{"outcome_correct", b.outcome_correct},
            {"format_ok", b.format_ok},
            {"global_reward", b.global_reward},
            {"global_advantage", b.global_advantage},
            {"turn_labels", labels},
            {"turn_rewards", b.turn_rewards},
            {"turn_advantages", b.turn_advantages},
            {"token_advantages", b.token_advantages}};
}

}  // namespace criticsearch
