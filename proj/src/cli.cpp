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


#include "criticsearch/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>

#include "CLI11.hpp"
#include "criticsearch/critic.hpp"
#include "criticsearch/errors.hpp"
#include "criticsearch/harness.hpp"
#include "criticsearch/rng.hpp"
#include "criticsearch/trainer.hpp"

namespace criticsearch {

namespace {

struct EnvArgs {
    std::string kb = "kb.txt";
    std::string questions = "questions.jsonl";
    int max_turns = 4;
    int k_docs = 3;
    std::uint64_t retrieval_seed = 0;

    void add(CLI::App* app) {
        app->add_option("--kb", kb, "knowledge base file")->capture_default_str();
        app->add_option("--questions", questions, "questions JSONL")->capture_default_str();
        app->add_option("--max-turns", max_turns, "turn budget T_max")->capture_default_str();
        app->add_option("--k-docs", k_docs, "documents per search")->capture_default_str();
        app->add_option("--retrieval-seed", retrieval_seed, "distractor seed")->capture_default_str();
    }
    EnvConfig env() const { return {max_turns, k_docs, retrieval_seed}; }
};

// Writes to a file, or to `fallback` when the path is empty or "-".
class Output {
public:
    Output(const std::string& path, std::ostream& fallback) {
        if (path.empty() || path == "-") {
            stream_ = &fallback;
        } else {
            file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
            if (!*file_) throw RunError("cannot write " + path);
            stream_ = file_.get();
        }
    }
    std::ostream& operator*() { return *stream_; }
    void finish() {
        stream_->flush();
        if (!*stream_) throw RunError("write failed");
    }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* stream_ = nullptr;
};

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

const Question& find_question(const std::map<std::string, const Question*>& by_id, const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw FormatError("trajectory refers to unknown question " + id);
    return *it->second;
}

PolicyParams policy_or_prior(const std::string& path, const KnowledgeBase& kb, int max_turns) {
    return path.empty() ? protocol_prior(kb.vocabulary(), max_turns) : load_policy(path, kb.vocabulary(), max_turns);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Turn-level critic credit assignment for multi-turn search agents"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    // gen-env
    auto* gen = app.add_subcommand("gen-env", "generate a knowledge base and questions");
    int entities = 50, relations = 8, hops = 3, n_questions = 8;
    double density = 0.3;
    std::uint64_t env_seed = 0;
    std::string out_dir = ".";
    gen->add_option("--entities", entities)->capture_default_str();
    gen->add_option("--relations", relations)->capture_default_str();
    gen->add_option("--density", density)->capture_default_str();
    gen->add_option("--hops", hops)->capture_default_str();
    gen->add_option("--questions", n_questions)->capture_default_str();
    gen->add_option("--seed", env_seed)->capture_default_str();
    gen->add_option("--out-dir", out_dir, "writes kb.txt and questions.jsonl here")->capture_default_str();

    // train
    auto* train = app.add_subcommand("train", "train from a key=value config file");
    std::string config_path, run_dir;
    bool resume = false;
    train->add_option("--config", config_path)->required();
    train->add_option("--run-dir", run_dir)->required();
    train->add_flag("--resume", resume, "continue from the newest checkpoint");

    // eval
    auto* eval = app.add_subcommand("eval", "greedy evaluation (EM / F1)");
    EnvArgs eval_env;
    eval_env.add(eval);
    std::string eval_policy, eval_out, dataset_id = "synthetic";
    bool eval_scripted = false;
    eval->add_option("--policy", eval_policy, "checkpoint (default: the protocol prior)");
    eval->add_flag("--scripted", eval_scripted, "evaluate the scripted gold-path agent");
    eval->add_option("--dataset-id", dataset_id)->capture_default_str();
    eval->add_option("--out", eval_out, "report JSON (default stdout)");

    // rollout
    auto* rollout = app.add_subcommand("rollout", "sample trajectories to JSONL");
    EnvArgs roll_env;
    roll_env.add(rollout);
    std::string roll_policy, roll_out;
    int samples = 1;
    std::uint64_t roll_seed = 0;
    SamplingConfig sampling;
    bool roll_scripted = false;
    rollout->add_option("--policy", roll_policy, "checkpoint (default: the protocol prior)");
    rollout->add_flag("--scripted", roll_scripted, "play the scripted gold-path agent");
    rollout->add_option("--samples", samples, "trajectories per question")->capture_default_str();
    rollout->add_option("--seed", roll_seed)->capture_default_str();
    rollout->add_option("--temperature", sampling.temperature)->capture_default_str();
    rollout->add_flag("--greedy", sampling.greedy);
    rollout->add_option("--out", roll_out, "trajectory JSONL (default stdout)");

    // score
    auto* score = app.add_subcommand("score", "run a critic over trajectories");
    EnvArgs score_env;
    score_env.add(score);
    std::string critic_name = "oracle", score_in, score_out, score_policy;
    McOptions mc;
    std::uint64_t score_seed = 0;
    CriticEndpointConfig endpoint;
    long long timeout_ms = endpoint.timeout.count();
    bool no_gold = false;
    score->add_option("--critic", critic_name, "oracle, mc or remote")->capture_default_str();
    score->add_option("--in", score_in, "trajectory JSONL")->required();
    score->add_option("--out", score_out, "verdict JSONL (default stdout)");
    score->add_option("--policy", score_policy, "rollout policy for mc (default: the protocol prior)");
    score->add_option("--rollouts", mc.n_rollouts)->capture_default_str();
    score->add_option("--threshold", mc.threshold)->capture_default_str();
    score->add_option("--seed", score_seed)->capture_default_str();
    score->add_option("--base-url", endpoint.base_url);
    score->add_option("--model", endpoint.model_name);
    score->add_option("--timeout-ms", timeout_ms)->capture_default_str();
    score->add_option("--max-retries", endpoint.max_retries)->capture_default_str();
    score->add_option("--max-in-flight", endpoint.max_in_flight)->capture_default_str();
    score->add_flag("--no-gold", no_gold, "omit the golden answer from the prompt");

    // agree
    auto* agree = app.add_subcommand("agree", "pooled label agreement of two verdict files");
    std::string agree_a, agree_b;
    agree->add_option("--a", agree_a)->required();
    agree->add_option("--b", agree_b)->required();

    // compare
    auto* compare = app.add_subcommand("compare", "paired-seed convergence comparison");
    std::string cfg_a, cfg_b, name_a = "a", name_b = "b", cmp_out = "compare";
    int n_seeds = 5, parallel = 1;
    double threshold = 0.9;
    compare->add_option("--config-a", cfg_a)->required();
    compare->add_option("--config-b", cfg_b)->required();
    compare->add_option("--name-a", name_a)->capture_default_str();
    compare->add_option("--name-b", name_b)->capture_default_str();
    compare->add_option("--seeds", n_seeds)->capture_default_str();
    compare->add_option("--threshold", threshold)->capture_default_str();
    compare->add_option("--parallel", parallel, "runs trained concurrently")->capture_default_str();
    compare->add_option("--out-dir", cmp_out)->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*gen) {
            const auto kb = generate_kb(entities, relations, density, env_seed);
            const auto questions = generate_questions(kb, hops, n_questions, derive_seed({env_seed, 1}));
            std::filesystem::create_directories(out_dir);
            save_kb((std::filesystem::path(out_dir) / "kb.txt").string(), kb);
            save_questions((std::filesystem::path(out_dir) / "questions.jsonl").string(), questions);
            out << "wrote " << kb.triples().size() << " triples and " << questions.size() << " questions to "
                << out_dir << "\n";
        } else if (*train) {
            TrainConfig cfg;
            EnvSpec spec;
            load_config(config_path, cfg, spec);
            TrainOptions opts;
            opts.resume = resume;
            const auto res = train_loop(cfg, spec, run_dir, opts);
            out << "steps " << res.metrics.size() << " stop " << res.stop_reason << "\n";
            if (!res.metrics.empty()) out << metrics_header() << "\n" << metrics_row(res.metrics.back()) << "\n";
        } else if (*eval) {
            const auto kb = load_kb(eval_env.kb);
            const auto questions = load_questions(eval_env.questions, kb);
            EvalReport report;
            if (eval_scripted) {
                std::vector<Trajectory> trajs;
                for (const auto& q : questions) trajs.push_back(scripted_gold_trajectory(q, kb, eval_env.env()));
                report = evaluate_trajectories(trajs, questions, dataset_id);
            } else {
                const auto params = policy_or_prior(eval_policy, kb, eval_env.max_turns);
                report = evaluate(params, questions, kb, eval_env.env(), dataset_id);
            }
            Output o(eval_out, out);
            *o << eval_report_to_json(report).dump() << "\n";
            o.finish();
        } else if (*rollout) {
            const auto kb = load_kb(roll_env.kb);
            const auto questions = load_questions(roll_env.questions, kb);
            const auto params = policy_or_prior(roll_policy, kb, roll_env.max_turns);
            Output o(roll_out, out);
            for (std::size_t qi = 0; qi < questions.size(); ++qi) {
                for (int j = 0; j < samples; ++j) {
                    const auto traj =
                        roll_scripted ? scripted_gold_trajectory(questions[qi], kb, roll_env.env())
                                      : sample_trajectory(params, questions[qi], kb, roll_env.env(), sampling,
                                                          derive_seed({roll_seed, qi, static_cast<std::uint64_t>(j)}));
                    *o << trajectory_to_json(traj, kb).dump() << "\n";
                }
            }
            o.finish();
        } else if (*score) {
            const auto kb = load_kb(score_env.kb);
            const auto questions = load_questions(score_env.questions, kb);
            std::map<std::string, const Question*> by_id;
            for (const auto& q : questions) by_id[q.id] = &q;
            const auto trajs = read_trajectories(score_in, kb);
            const CriticSource source = critic_source_from_name(critic_name);
            std::vector<CritiqueVerdict> verdicts;
            if (source == CriticSource::Remote) {
                endpoint.timeout = std::chrono::milliseconds(timeout_ms);
                if (endpoint.base_url.empty()) throw ConfigError("--base-url is required for the remote critic");
                std::vector<std::string> prompts;
                std::vector<int> expected;
                for (const auto& t : trajs) {
                    prompts.push_back(critique_prompt_for(t, find_question(by_id, t.question_id), kb, !no_gold));
                    expected.push_back(static_cast<int>(t.search_turn_count()));
                }
                verdicts = remote_judge_batch(endpoint, prompts, expected);
            } else {
                const auto params = policy_or_prior(score_policy, kb, score_env.max_turns);
                for (std::size_t i = 0; i < trajs.size(); ++i) {
                    const Question& q = find_question(by_id, trajs[i].question_id);
                    verdicts.push_back(source == CriticSource::Oracle
                                           ? oracle_judge(trajs[i], q, kb)
                                           : mc_judge(trajs[i], params, q, kb, score_env.env(), mc,
                                                      derive_seed({score_seed, i})));
                }
            }
            Output o(score_out, out);
            for (std::size_t i = 0; i < trajs.size(); ++i) {
                *o << verdict_to_json(verdicts[i], trajs[i].question_id).dump() << "\n";
            }
            o.finish();
        } else if (*agree) {
            const auto a = read_verdicts(agree_a);
            const auto b = read_verdicts(agree_b);
            if (a.size() != b.size()) throw ShapeError("verdict files have different record counts");
            std::vector<std::vector<Label>> la, lb;
            for (std::size_t i = 0; i < a.size(); ++i) {
                if (a[i].question_id != b[i].question_id) {
                    throw ShapeError("record " + std::to_string(i) + " refers to different questions");
                }
                la.push_back(a[i].verdict.labels);
                lb.push_back(b[i].verdict.labels);
            }
            out << fmt_double(label_agreement(std::span<const std::vector<Label>>(la),
                                              std::span<const std::vector<Label>>(lb)))
                << "\n";
        } else if (*compare) {
            NamedConfig a{name_a, {}}, b{name_b, {}};
            EnvSpec env_a, env_b;
            load_config(cfg_a, a.config, env_a);
            load_config(cfg_b, b.config, env_b);
            if (config_manifest(TrainConfig{}, env_a) != config_manifest(TrainConfig{}, env_b)) {
                throw ConfigError("the two configs describe different environments");
            }
            const auto report = compare_convergence(a, b, env_a, n_seeds, threshold, cmp_out, parallel);
            out << comparison_csv(report);
            for (std::size_t c = 0; c < report.configs.size(); ++c) {
                out << "median " << report.configs[c] << " " << fmt_double(report.median_steps[c]) << "\n";
            }
            out << "wins " << name_a << " " << report.wins_first << " " << name_b << " " << report.wins_second
                << " ties " << report.ties << "\n";
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace criticsearch
