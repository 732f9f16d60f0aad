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


#include "criticsearch/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "criticsearch/errors.hpp"

namespace criticsearch {

namespace fs = std::filesystem;

namespace {

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RunError("cannot write " + path.string());
    out << text;
    if (!out) throw RunError("write failed for " + path.string());
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

EvalReport evaluate_trajectories(std::span<const Trajectory> trajectories, std::span<const Question> questions,
                                 std::string dataset_id) {
    if (trajectories.size() != questions.size()) throw ShapeError("one trajectory per question");
    EvalReport r;
    r.dataset_id = std::move(dataset_id);
    r.num_questions = static_cast<int>(questions.size());
    if (questions.empty()) return r;
    for (std::size_t i = 0; i < questions.size(); ++i) {
        const std::string gold = answer_text(questions[i].gold_answer);
        const std::string pred = trajectories[i].extracted_answer.value_or("");
        r.em += eval_em(pred, gold);
        r.f1 += eval_f1(pred, gold);
        r.mean_turns += static_cast<double>(trajectories[i].turns.size());
    }
    const double n = static_cast<double>(questions.size());
    r.em /= n;
    r.f1 /= n;
    r.mean_turns /= n;
    return r;
}

EvalReport evaluate(const PolicyParams& params, std::span<const Question> questions, const KnowledgeBase& kb,
                    const EnvConfig& env, std::string dataset_id, int max_turn_tokens) {
    SamplingConfig greedy;
    greedy.greedy = true;
    greedy.max_turn_tokens = max_turn_tokens;
    std::vector<Trajectory> trajs;
    for (const auto& q : questions) trajs.push_back(sample_trajectory(params, q, kb, env, greedy, 0));
    return evaluate_trajectories(trajs, questions, std::move(dataset_id));
}

nlohmann::json eval_report_to_json(const EvalReport& r) {
    return {{"dataset_id", r.dataset_id},
            {"num_questions", r.num_questions},
            {"em", r.em},
            {"f1", r.f1},
            {"mean_turns", r.mean_turns}};
}

ConvergencePoint steps_to_threshold(std::span<const StepMetrics> metrics, double threshold, int total_steps) {
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        if (metrics[i].mean_outcome_reward >= threshold) return {static_cast<int>(i) + 1, false};
    }
    return {total_steps, true};
}

ComparisonReport compare_configs(std::span<const NamedConfig> configs, const EnvSpec& env_spec, int n_seeds,
                                 double success_threshold, const fs::path& out_dir, int parallel_runs) {
    if (configs.empty()) throw ConfigError("nothing to compare");
    if (n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
    for (const auto& c : configs) c.config.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw RunError("cannot create " + out_dir.string() + ": " + ec.message());

    const Environment env = build_environment(env_spec);
    ComparisonReport report;
    for (const auto& c : configs) report.configs.push_back(c.name);
    const std::size_t seeds = static_cast<std::size_t>(n_seeds);
    report.rows.resize(configs.size() * seeds);
    parallel_for(report.rows.size(), parallel_runs, [&](std::size_t job) {
        const NamedConfig& nc = configs[job / seeds];
        TrainConfig cfg = nc.config;
        cfg.seed = nc.config.seed + job % seeds;
        const fs::path dir = out_dir / (nc.name + "_seed" + std::to_string(cfg.seed));
        TrainResult res = train_loop(cfg, env_spec, env, dir);
        ComparisonRow& row = report.rows[job];
        row.config = nc.name;
        row.seed = cfg.seed;
        row.point = steps_to_threshold(res.metrics, success_threshold, cfg.total_steps);
        row.stop_reason = res.stop_reason;
        row.metrics = std::move(res.metrics);
    });

    for (std::size_t c = 0; c < configs.size(); ++c) {
        std::vector<double> steps;
        for (std::size_t s = 0; s < seeds; ++s) steps.push_back(report.rows[c * seeds + s].point.steps);
        report.median_steps.push_back(median(steps));
    }
    if (configs.size() == 2) {
        for (std::size_t s = 0; s < seeds; ++s) {
            const int a = report.rows[s].point.steps;
            const int b = report.rows[seeds + s].point.steps;
            if (a < b) {
                ++report.wins_first;
            } else if (b < a) {
                ++report.wins_second;
            } else {
                ++report.ties;
            }
        }
    }
    write_file(out_dir / "comparison.csv", comparison_csv(report));
    write_file(out_dir / "convergence.svg", convergence_svg(report, success_threshold));
    return report;
}

ComparisonReport compare_convergence(const NamedConfig& a, const NamedConfig& b, const EnvSpec& env, int n_seeds,
                                     double success_threshold, const fs::path& out_dir, int parallel_runs) {
    if (n_seeds < 3) throw ConfigError("a comparison needs at least 3 seeds");
    const NamedConfig both[] = {a, b};
    return compare_configs(both, env, n_seeds, success_threshold, out_dir, parallel_runs);
}

ComparisonReport sweep_alpha(const TrainConfig& base, std::span<const double> alphas, const EnvSpec& env,
                             int n_seeds, double success_threshold, const fs::path& out_dir, int parallel_runs) {
    std::vector<NamedConfig> configs;
    for (double a : alphas) {
        NamedConfig nc{"alpha=" + fmt("%g", a), base};
        nc.config.alpha = a;
        configs.push_back(std::move(nc));
    }
    return compare_configs(configs, env, n_seeds, success_threshold, out_dir, parallel_runs);
}

std::string comparison_csv(const ComparisonReport& report) {
    std::string out = "config,seed,steps_to_threshold,censored\n";
    for (const auto& row : report.rows) {
        out += row.config + "," + std::to_string(row.seed) + "," + std::to_string(row.point.steps) + "," +
               (row.point.censored ? "true" : "false") + "\n";
    }
    return out;
}

std::string convergence_svg(const ComparisonReport& report, double success_threshold) {
    constexpr double W = 720, H = 420, left = 60, right = 170, top = 30, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    std::size_t max_steps = 1;
    for (const auto& row : report.rows) max_steps = std::max(max_steps, row.metrics.size());
    const auto x = [&](double step) { return left + pw * step / static_cast<double>(max_steps); };
    const auto y = [&](double r) { return top + ph * (1.0 - std::clamp(r, 0.0, 1.0)); };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%g", W) + "\" height=\"" + fmt("%g", H) +
         "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<g stroke=\"#444\" fill=\"none\">\n";
    s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top + ph) + "\" x2=\"" + fmt("%.1f", left + pw) +
         "\" y2=\"" + fmt("%.1f", top + ph) + "\"/>\n";
    s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top) + "\" x2=\"" + fmt("%.1f", left) +
         "\" y2=\"" + fmt("%.1f", top + ph) + "\"/>\n</g>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = i / 4.0;
        s += "<text x=\"" + fmt("%.1f", left - 8) + "\" y=\"" + fmt("%.1f", y(v) + 4) + "\" text-anchor=\"end\">" +
             fmt("%.2f", v) + "</text>\n";
    }
    for (int i = 0; i <= 4; ++i) {
        const double step = static_cast<double>(max_steps) * i / 4.0;
        s += "<text x=\"" + fmt("%.1f", x(step)) + "\" y=\"" + fmt("%.1f", top + ph + 18) +
             "\" text-anchor=\"middle\">" + fmt("%.0f", step) + "</text>\n";
    }
    s += "<text x=\"" + fmt("%.1f", left + pw / 2) + "\" y=\"" + fmt("%.1f", H - 10) +
         "\" text-anchor=\"middle\">step</text>\n";
    s += "<text transform=\"translate(16," + fmt("%.1f", top + ph / 2) +
         ") rotate(-90)\" text-anchor=\"middle\">mean outcome reward</text>\n";
    s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", y(success_threshold)) + "\" x2=\"" +
         fmt("%.1f", left + pw) + "\" y2=\"" + fmt("%.1f", y(success_threshold)) +
         "\" stroke=\"#999\" stroke-dasharray=\"4 4\"/>\n";

    for (const auto& row : report.rows) {
        const auto it = std::find(report.configs.begin(), report.configs.end(), row.config);
        const auto c = static_cast<std::size_t>(it - report.configs.begin());
        std::string pts;
        for (const auto& m : row.metrics) {
            pts += fmt("%.2f", x(m.step + 1)) + "," + fmt("%.2f", y(m.mean_outcome_reward)) + " ";
        }
        s += "<polyline fill=\"none\" stroke-width=\"1.2\" stroke-opacity=\"0.8\" stroke=\"" +
             std::string(kPalette[c % std::size(kPalette)]) + "\" points=\"" + pts + "\"/>\n";
    }
    for (std::size_t c = 0; c < report.configs.size(); ++c) {
        const double ly = top + 10 + 20.0 * static_cast<double>(c);
        s += "<line x1=\"" + fmt("%.1f", left + pw + 15) + "\" y1=\"" + fmt("%.1f", ly) + "\" x2=\"" +
             fmt("%.1f", left + pw + 35) + "\" y2=\"" + fmt("%.1f", ly) + "\" stroke=\"" +
             kPalette[c % std::size(kPalette)] + "\" stroke-width=\"2\"/>\n";
        s += "<text x=\"" + fmt("%.1f", left + pw + 40) + "\" y=\"" + fmt("%.1f", ly + 4) + "\">" + report.configs[c] +
             "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

}  // namespace criticsearch
