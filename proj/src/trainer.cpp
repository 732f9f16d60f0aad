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


#include "criticsearch/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "criticsearch/errors.hpp"
#include "criticsearch/eval.hpp"
#include "criticsearch/rng.hpp"
#include "criticsearch/simd/kernels.hpp"

namespace criticsearch {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, value);
    if (res.ec != std::errc() || res.ptr != end) {
        throw ConfigError("bad value '" + std::string(text) + "' for " + std::string(key));
    }
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("bad value '" + std::string(text) + "' for " + std::string(key));
}

// One entry per config key, in manifest order.
struct Field {
    std::string key;
    std::function<void(std::string_view)> set;
    std::function<std::string()> get;
};

template <class T>
Field number_field(std::string key, T& ref) {
    return {key, [&ref, key](std::string_view v) { ref = parse_number<T>(key, v); },
            [&ref] {
                if constexpr (std::is_floating_point_v<T>) {
                    return fmt_double(ref);
                } else {
                    return std::to_string(ref);
                }
            }};
}

Field string_field(std::string key, std::string& ref) {
    return {key, [&ref](std::string_view v) { ref = std::string(v); }, [&ref] { return ref; }};
}

std::vector<Field> config_fields(TrainConfig& c, EnvSpec& e) {
    std::vector<Field> f;
    f.push_back(number_field("G", c.G));
    f.push_back(number_field("alpha", c.alpha));
    f.push_back(number_field("lambda_f", c.lambda_f));
    f.push_back(number_field("beta", c.beta));
    f.push_back(number_field("eta", c.eta));
    f.push_back(number_field("eps_clip", c.eps_clip));
    f.push_back(number_field("eps_turn", c.eps_turn));
    f.push_back(number_field("std_floor", c.std_floor));
    f.push_back(number_field("learning_rate", c.learning_rate));
    f.push_back(number_field("M", c.M));
    f.push_back(number_field("T_max", c.T_max));
    f.push_back(number_field("k_docs", c.k_docs));
    f.push_back(number_field("batch_questions", c.batch_questions));
    f.push_back(number_field("total_steps", c.total_steps));
    f.push_back(number_field("seed", c.seed));
    f.push_back({"critic_source",
                 [&c](std::string_view v) {
                     if (v == "None" || v == "none") {
                         c.critic_source.reset();
                     } else {
                         c.critic_source = critic_source_from_name(v);
                     }
                 },
                 [&c] { return c.critic_source ? std::string(critic_source_name(*c.critic_source)) : "None"; }});
    f.push_back(number_field("temperature", c.temperature));
    f.push_back(number_field("max_turn_tokens", c.max_turn_tokens));
    f.push_back(number_field("warmup_fraction", c.warmup_fraction));
    f.push_back(number_field("checkpoint_interval", c.checkpoint_interval));
    f.push_back(number_field("collapse_window", c.collapse_window));
    f.push_back(number_field("kl_limit", c.kl_limit));
    f.push_back(number_field("grad_spike_factor", c.grad_spike_factor));
    f.push_back(number_field("mc_rollouts", c.mc_rollouts));
    f.push_back(number_field("mc_threshold", c.mc_threshold));
    f.push_back(number_field("threads", c.threads));
    f.push_back({"log_rollouts", [&c](std::string_view v) { c.log_rollouts = parse_bool("log_rollouts", v); },
                 [&c] { return std::string(c.log_rollouts ? "true" : "false"); }});
    f.push_back(number_field("prior_structure", c.prior.structure));
    f.push_back(number_field("prior_copy", c.prior.copy));
    f.push_back(number_field("prior_answer_bias", c.prior.answer_bias));
    f.push_back(string_field("critic_base_url", c.endpoint.base_url));
    f.push_back(string_field("critic_model", c.endpoint.model_name));
    f.push_back({"critic_timeout_ms",
                 [&c](std::string_view v) {
                     c.endpoint.timeout = std::chrono::milliseconds(parse_number<long long>("critic_timeout_ms", v));
                 },
                 [&c] { return std::to_string(c.endpoint.timeout.count()); }});
    f.push_back(number_field("critic_max_retries", c.endpoint.max_retries));
    f.push_back(number_field("critic_max_in_flight", c.endpoint.max_in_flight));
    f.push_back(number_field("entities", e.entities));
    f.push_back(number_field("relations", e.relations));
    f.push_back(number_field("density", e.density));
    f.push_back(number_field("hops", e.hops));
    f.push_back(number_field("num_questions", e.num_questions));
    f.push_back(number_field("env_seed", e.env_seed));
    f.push_back(string_field("kb_path", e.kb_path));
    f.push_back(string_field("questions_path", e.questions_path));
    return f;
}

SamplingConfig sampling_of(const TrainConfig& c) {
    SamplingConfig s;
    s.temperature = c.temperature;
    s.max_turn_tokens = c.max_turn_tokens;
    return s;
}

double trajectory_reward(const Trajectory& traj, const Question& q, double lambda_f) {
    return global_reward(traj.extracted_answer, answer_text(q.gold_answer), check_format(traj), lambda_f);
}

double norm(std::span<const double> v) { return std::sqrt(simd::dot(v, v)); }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RunError("cannot write " + path.string());
    out << text;
    if (!out) throw RunError("write failed for " + path.string());
}

std::optional<int> newest_checkpoint(const fs::path& dir) {
    std::optional<int> best;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir, ec)) {
        const std::string name = entry.path().filename().string();
        if (!name.starts_with("ckpt_") || !name.ends_with(".policy")) continue;
        const std::string digits = name.substr(5, name.size() - 5 - 7);
        int step = 0;
        const auto res = std::from_chars(digits.data(), digits.data() + digits.size(), step);
        if (res.ec != std::errc() || res.ptr != digits.data() + digits.size()) continue;
        if (!best || step > *best) best = step;
    }
    return best;
}

fs::path checkpoint_path(const fs::path& dir, int step) { return dir / ("ckpt_" + std::to_string(step) + ".policy"); }

}  // namespace

void TrainConfig::validate() const {
    const auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(what);
    };
    require(G >= 2, "G must be >= 2");
    require(alpha >= 0.0 && alpha <= 1.0, "alpha must lie in [0, 1]");
    require(lambda_f > 0.0 && lambda_f < 0.5, "lambda_f must lie in (0, 0.5)");
    require(beta >= 0.0, "beta must be >= 0");
    require(eta >= 0.0, "eta must be >= 0");
    require(eps_clip > 0.0, "eps_clip must be > 0");
    require(eps_turn > 0.0, "eps_turn must be > 0");
    require(std_floor >= 0.0, "std_floor must be >= 0");
    require(learning_rate > 0.0, "learning_rate must be > 0");
    require(M >= 1, "M must be >= 1");
    require(T_max >= 1, "T_max must be >= 1");
    require(k_docs >= 1, "k_docs must be >= 1");
    require(batch_questions >= 1, "batch_questions must be >= 1");
    require(total_steps >= 0, "total_steps must be >= 0");
    require(temperature > 0.0, "temperature must be > 0");
    require(max_turn_tokens >= 1, "max_turn_tokens must be >= 1");
    require(warmup_fraction >= 0.0 && warmup_fraction <= 1.0, "warmup_fraction must lie in [0, 1]");
    require(checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
    require(collapse_window >= 2, "collapse_window must be >= 2");
    require(mc_rollouts >= 1, "mc_rollouts must be >= 1");
    require(threads >= 1, "threads must be >= 1");
    require(endpoint.max_retries >= 0, "critic_max_retries must be >= 0");
    require(endpoint.max_in_flight >= 1, "critic_max_in_flight must be >= 1");
    if (critic_source == CriticSource::Remote) require(!endpoint.base_url.empty(), "critic_base_url is required");
}

Environment build_environment(const EnvSpec& spec) {
    Environment env;
    if (!spec.kb_path.empty()) {
        env.kb = load_kb(spec.kb_path);
    } else {
        env.kb = generate_kb(spec.entities, spec.relations, spec.density, spec.env_seed);
    }
    if (!spec.questions_path.empty()) {
        env.questions = load_questions(spec.questions_path, env.kb);
    } else {
        env.questions = generate_questions(env.kb, spec.hops, spec.num_questions, derive_seed({spec.env_seed, 1}));
    }
    if (env.questions.empty()) throw ConfigError("the environment has no questions");
    return env;
}

EnvConfig env_config(const TrainConfig& config, const EnvSpec& spec) {
    EnvConfig e;
    e.max_turns = config.T_max;
    e.k_docs = config.k_docs;
    e.retrieval_seed = spec.env_seed;
    return e;
}

void parse_config(std::string_view text, TrainConfig& config, EnvSpec& env) {
    auto fields = config_fields(config, env);
    std::size_t lineno = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        }
        const std::string_view key = trim(line.substr(0, eq));
        const std::string_view value = trim(line.substr(eq + 1));
        auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return f.key == key; });
        if (it == fields.end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key " + std::string(key));
        it->set(value);
    }
}

void load_config(const std::string& path, TrainConfig& config, EnvSpec& env) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    parse_config(ss.str(), config, env);
}

std::string config_manifest(const TrainConfig& config, const EnvSpec& env) {
    TrainConfig c = config;
    EnvSpec e = env;
    std::string out;
    for (const auto& f : config_fields(c, e)) out += f.key + "=" + f.get() + "\n";
    return out;
}

double valid_action_ratio(std::span<const Trajectory> trajectories) {
    std::size_t valid = 0, total = 0;
    for (const auto& traj : trajectories) {
        for (const auto& turn : traj.turns) {
            ++total;
            if (turn.kind == TurnKind::Answer) ++valid;
            if (turn.kind == TurnKind::Search && turn.feedback && !turn.feedback->empty()) ++valid;
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(valid) / static_cast<double>(total);
}

GroupRollout rollout_group(const PolicyParams& params, const Question& question, const KnowledgeBase& kb,
                           const EnvConfig& env, const TrainConfig& config, std::uint64_t seed) {
    config.validate();
    GroupRollout group;
    group.question = question;
    const std::size_t G = static_cast<std::size_t>(config.G);
    const SamplingConfig sampling = sampling_of(config);
    std::vector<double> rewards;
    for (std::size_t i = 0; i < G; ++i) {
        group.trajectories.push_back(sample_trajectory(params, question, kb, env, sampling, derive_seed({seed, i})));
        rewards.push_back(trajectory_reward(group.trajectories.back(), question, config.lambda_f));
    }
    const auto adv = global_advantages(rewards, config.std_floor);
    const std::string gold = answer_text(question.gold_answer);

    std::vector<std::vector<Label>> labels(G);
    if (config.critic_source == CriticSource::Oracle) {
        for (std::size_t i = 0; i < G; ++i) labels[i] = oracle_judge(group.trajectories[i], question, kb).labels;
    } else if (config.critic_source == CriticSource::MonteCarlo) {
        McOptions mc;
        mc.n_rollouts = config.mc_rollouts;
        mc.threshold = config.mc_threshold;
        mc.lambda_f = config.lambda_f;
        mc.sampling = sampling;
        for (std::size_t i = 0; i < G; ++i) {
            labels[i] = mc_judge(group.trajectories[i], params, question, kb, env, mc, derive_seed({seed, i, 1})).labels;
        }
    } else if (config.critic_source == CriticSource::Remote) {
        std::vector<std::string> prompts;
        std::vector<int> expected;
        for (const auto& traj : group.trajectories) {
            prompts.push_back(critique_prompt_for(traj, question, kb));
            expected.push_back(static_cast<int>(traj.search_turn_count()));
        }
        const auto verdicts = remote_judge_batch(config.endpoint, prompts, expected);
        for (std::size_t i = 0; i < G; ++i) {
            // Unparseable critique: every search turn counts as Good.
            labels[i] = verdicts[i].parse_ok ? verdicts[i].labels
                                             : std::vector<Label>(static_cast<std::size_t>(expected[i]), Label::Good);
        }
    }

    for (std::size_t i = 0; i < G; ++i) {
        const Trajectory& traj = group.trajectories[i];
        RewardBreakdown b;
        b.format_ok = check_format(traj);
        b.outcome_correct = traj.extracted_answer && eval_em(*traj.extracted_answer, gold) == 1;
        b.global_reward = rewards[i];
        b.global_advantage = adv[i];
        if (config.critic_source) {
            assign_turn_credit(b, traj, std::move(labels[i]), config.alpha, config.eps_turn);
        } else {
            const std::vector<double> zeros(traj.search_turn_count(), 0.0);
            b.token_advantages = hybrid_token_advantages(traj, b.global_advantage, zeros, 0.0);
        }
        group.breakdowns.push_back(std::move(b));
    }
    return group;
}

PreparedBatch prepare_batch(std::span<const GroupRollout> groups, const PolicyParams& old_params,
                            const TrainConfig& config) {
    PreparedBatch batch;
    batch.num_groups = groups.size();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const GroupRollout& group = groups[g];
        if (group.trajectories.size() != group.breakdowns.size()) throw ShapeError("one breakdown per trajectory");
        batch.group_sizes.push_back(group.trajectories.size());
        for (std::size_t i = 0; i < group.trajectories.size(); ++i) {
            auto states = trajectory_states(old_params.layout(), group.trajectories[i], group.question);
            const auto& adv = group.breakdowns[i].token_advantages;
            if (adv.size() != states.size()) throw ShapeError("token advantages do not match the trajectory");
            PreparedBatch::Sequence seq;
            seq.group = g;
            seq.advantages = adv;
            for (auto& s : states) {
                const auto dist = action_distribution(old_params, s.features, config.temperature);
                seq.old_logprobs.push_back(dist.logprobs[s.token]);
                seq.tokens.push_back(s.token);
                batch.visited.push_back(s.features);
                seq.features.push_back(std::move(s.features));
            }
            batch.sequences.push_back(std::move(seq));
        }
    }
    return batch;
}

ObjectiveResult grpo_objective(const PreparedBatch& batch, const PolicyParams& params,
                               const PolicyParams& ref_params, const TrainConfig& config) {
    ObjectiveResult r;
    r.gradient = PolicyParams(params.vocabulary(), params.layout().max_turns());
    if (!params.same_shape(ref_params)) throw ShapeError("policy and reference shapes differ");
    const double tau = config.temperature;
    const double lo = 1.0 - config.eps_clip;
    const double hi = 1.0 + config.eps_clip;
    std::vector<double> group_sums(batch.num_groups, 0.0);
    std::vector<double> coeff(params.vocab_size());
    for (const auto& seq : batch.sequences) {
        const double scale =
            1.0 / (static_cast<double>(batch.num_groups) * static_cast<double>(batch.group_sizes[seq.group]));
        for (std::size_t t = 0; t < seq.tokens.size(); ++t) {
            const auto dist = action_distribution(params, seq.features[t], tau);
            const std::size_t tok = seq.tokens[t];
            const double w = std::exp(dist.logprobs[tok] - seq.old_logprobs[t]);
            const double a = seq.advantages[t];
            const double unclipped = w * a;
            const double clipped = std::clamp(w, lo, hi) * a;
            // d/dW of the unclipped branch is a * w * dlogpi; the clipped
            // branch is constant in W.
            double dcoef = 0.0;
            if (unclipped <= clipped) {
                group_sums[seq.group] += unclipped;
                dcoef = a * w;
            } else {
                group_sums[seq.group] += clipped;
            }
            if (dcoef == 0.0) continue;
            for (std::size_t v = 0; v < coeff.size(); ++v) coeff[v] = ((v == tok ? 1.0 : 0.0) - dist.probs[v]) / tau;
            accumulate_outer(r.gradient, coeff, seq.features[t], dcoef * scale);
        }
    }
    for (std::size_t g = 0; g < group_sums.size(); ++g) {
        if (!std::isfinite(group_sums[g])) throw NumericalError("non-finite objective in group " + std::to_string(g));
        r.surrogate += group_sums[g] / (static_cast<double>(batch.num_groups) * static_cast<double>(batch.group_sizes[g]));
    }
    const auto reg = regularizers_with_grad(params, ref_params, batch.visited, -config.beta, config.eta, r.gradient);
    r.kl = reg.kl;
    r.entropy = reg.entropy;
    r.value = r.surrogate - config.beta * reg.kl + config.eta * reg.entropy;
    r.grad_norm = norm(r.gradient.flat());
    if (!std::isfinite(r.value) || !std::isfinite(r.grad_norm)) throw NumericalError("non-finite objective");
    return r;
}

ObjectiveResult grpo_objective(std::span<const GroupRollout> groups, const PolicyParams& params,
                               const PolicyParams& old_params, const PolicyParams& ref_params,
                               const TrainConfig& config) {
    if (!params.same_shape(old_params)) throw ShapeError("policy and old policy shapes differ");
    return grpo_objective(prepare_batch(groups, old_params, config), params, ref_params, config);
}

std::string collapse_reason(std::span<const StepMetrics> history, int window, double kl_limit,
                            double grad_spike_factor) {
    if (window < 2) throw ConfigError("collapse window must be >= 2");
    const std::size_t w = static_cast<std::size_t>(window);
    if (history.size() >= w) {
        const auto tail = history.last(w);
        if (std::all_of(tail.begin(), tail.end(), [&](const StepMetrics& m) { return m.kl_value > kl_limit; })) {
            return "kl above " + fmt_double(kl_limit) + " for " + std::to_string(window) + " steps";
        }
    }
    if (history.size() >= w + 1) {
        std::vector<double> prev;
        for (const auto& m : history.subspan(history.size() - 1 - w, w)) prev.push_back(m.grad_norm);
        std::sort(prev.begin(), prev.end());
        const double median = w % 2 ? prev[w / 2] : 0.5 * (prev[w / 2 - 1] + prev[w / 2]);
        const double latest = history.back().grad_norm;
        if (median > 0.0 && latest > grad_spike_factor * median) {
            return "grad_norm " + fmt_double(latest) + " exceeds " + fmt_double(grad_spike_factor) + "x median " +
                   fmt_double(median);
        }
    }
    return "";
}

bool detect_collapse(std::span<const StepMetrics> history, int window, double kl_limit, double grad_spike_factor) {
    return !collapse_reason(history, window, kl_limit, grad_spike_factor).empty();
}

std::string metrics_header() { return "step,mean_outcome_reward,valid_action_ratio,grad_norm,kl_value,entropy,em,f1"; }

std::string metrics_row(const StepMetrics& m) {
    return std::to_string(m.step) + "," + fmt_double(m.mean_outcome_reward) + "," + fmt_double(m.valid_action_ratio) +
           "," + fmt_double(m.grad_norm) + "," + fmt_double(m.kl_value) + "," + fmt_double(m.entropy) + "," +
           fmt_double(m.em) + "," + fmt_double(m.f1);
}

std::vector<StepMetrics> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || trim(line) != metrics_header()) throw FormatError(path + ": bad metrics header");
    std::vector<StepMetrics> out;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8) throw FormatError(path + ": expected 8 columns");
        StepMetrics m;
        try {
            m.step = parse_number<int>("step", trim(cells[0]));
            double* fields[] = {&m.mean_outcome_reward, &m.valid_action_ratio, &m.grad_norm, &m.kl_value,
                                &m.entropy, &m.em, &m.f1};
            for (std::size_t i = 0; i < 7; ++i) *fields[i] = parse_number<double>("metric", trim(cells[i + 1]));
        } catch (const ConfigError& e) {
            throw FormatError(path + ": " + e.what());
        }
        out.push_back(m);
    }
    return out;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < workers; ++t) pool.emplace_back(work);
    work();
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

TrainResult train_loop(const TrainConfig& config, const EnvSpec& env_spec, const fs::path& run_dir,
                       const TrainOptions& options) {
    config.validate();
    return train_loop(config, env_spec, build_environment(env_spec), run_dir, options);
}

TrainResult train_loop(const TrainConfig& config, const EnvSpec& env_spec, const Environment& env,
                       const fs::path& run_dir, const TrainOptions& options) {
    config.validate();
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    if (ec) throw RunError("cannot create " + run_dir.string() + ": " + ec.message());
    write_text(run_dir / "config", config_manifest(config, env_spec));

    const Vocabulary& vocab = env.kb.vocabulary();
    const EnvConfig envcfg = env_config(config, env_spec);
    const fs::path metrics_path = run_dir / "metrics.csv";
    const fs::path ref_path = run_dir / "ref.policy";

    TrainResult result;
    PolicyParams ref;
    int start = 0;
    const auto newest = options.resume ? newest_checkpoint(run_dir) : std::nullopt;
    if (newest) {
        start = *newest;
        result.params = load_policy(checkpoint_path(run_dir, start).string(), vocab, config.T_max);
        ref = load_policy(ref_path.string(), vocab, config.T_max);
        for (const auto& m : read_metrics(metrics_path.string())) {
            if (m.step < start) result.metrics.push_back(m);
        }
    } else {
        result.params = options.initial_params ? *options.initial_params
                                               : protocol_prior(vocab, config.T_max, config.prior);
        if (result.params.layout() != FeatureLayout(vocab, config.T_max) || result.params.vocabulary() != vocab) {
            throw ShapeError("initial policy does not match the environment");
        }
        ref = result.params;
        save_policy(ref_path.string(), ref);
    }

    std::ofstream metrics_out(metrics_path, std::ios::trunc);
    if (!metrics_out) throw RunError("cannot write " + metrics_path.string());
    metrics_out << metrics_header() << '\n';
    for (const auto& m : result.metrics) metrics_out << metrics_row(m) << '\n';
    metrics_out.flush();

    std::ofstream rollouts_out;
    if (config.log_rollouts) {
        rollouts_out.open(run_dir / "rollouts.jsonl", newest ? std::ios::app : std::ios::trunc);
        if (!rollouts_out) throw RunError("cannot write rollouts.jsonl");
    }

    const std::size_t pool = env.questions.size();
    const std::size_t batch_n = static_cast<std::size_t>(config.batch_questions);
    int last_saved = newest ? start : -1;
    int steps_done = start;
    result.stop_reason = "completed";

    for (int step = start; step < config.total_steps; ++step) {
        if (options.stop_after >= 0 && step > options.stop_after) {
            result.stop_reason = "interrupted";
            break;
        }
        // Questions for this step: a seeded permutation of the pool.
        std::vector<std::size_t> order(pool);
        for (std::size_t i = 0; i < pool; ++i) order[i] = i;
        Rng qrng(derive_seed({config.seed, static_cast<std::uint64_t>(step), 0x71}));
        for (std::size_t i = pool; i > 1; --i) std::swap(order[i - 1], order[qrng.uniform_index(i)]);

        std::vector<GroupRollout> groups(batch_n);
        const PolicyParams& snapshot = result.params;
        parallel_for(batch_n, config.threads, [&](std::size_t b) {
            const Question& q = env.questions[order[b % pool]];
            groups[b] = rollout_group(snapshot, q, env.kb, envcfg, config,
                                      derive_seed({config.seed, static_cast<std::uint64_t>(step), b}));
        });

        if (config.effective_alpha() == 0.0) {
            for (const auto& g : groups) {
                for (const auto& b : g.breakdowns) {
                    for (double a : b.token_advantages) {
                        if (a != b.global_advantage) throw NumericalError("alpha=0 token advantage differs from global");
                    }
                }
            }
        }

        StepMetrics m;
        m.step = step;
        std::size_t n_traj = 0;
        std::vector<Trajectory> all;
        for (std::size_t b = 0; b < groups.size(); ++b) {
            const auto& g = groups[b];
            const std::string gold = answer_text(g.question.gold_answer);
            for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
                const auto& traj = g.trajectories[i];
                m.mean_outcome_reward += g.breakdowns[i].global_reward;
                m.em += eval_em(traj.extracted_answer.value_or(""), gold);
                m.f1 += eval_f1(traj.extracted_answer.value_or(""), gold);
                all.push_back(traj);
                ++n_traj;
                if (config.log_rollouts) {
                    auto rec = trajectory_to_json(traj, env.kb);
                    rec["step"] = step;
                    rec["group"] = b;
                    rec["reward_breakdown"] = breakdown_to_json(g.breakdowns[i]);
                    rollouts_out << rec.dump() << '\n';
                }
            }
        }
        m.mean_outcome_reward /= static_cast<double>(n_traj);
        m.em /= static_cast<double>(n_traj);
        m.f1 /= static_cast<double>(n_traj);
        m.valid_action_ratio = valid_action_ratio(all);

        double lr = config.learning_rate;
        if (config.warmup_fraction > 0.0) {
            const double warm = config.warmup_fraction * config.total_steps;
            lr *= std::min(1.0, (step + 1) / warm);
        }
        const PreparedBatch batch = prepare_batch(groups, result.params, config);
        bool bad_params = false;
        for (int inner = 0; inner < config.M; ++inner) {
            const ObjectiveResult obj = grpo_objective(batch, result.params, ref, config);
            if (inner == 0) {
                m.grad_norm = obj.grad_norm;
                m.kl_value = obj.kl;
                m.entropy = obj.entropy;
            }
            simd::axpy(result.params.flat(), lr, obj.gradient.flat());
            if (!result.params.all_finite()) {
                bad_params = true;
                break;
            }
        }

        result.metrics.push_back(m);
        metrics_out << metrics_row(m) << '\n';
        metrics_out.flush();
        if (config.log_rollouts) rollouts_out.flush();
        if (!metrics_out) throw RunError("write failed for " + metrics_path.string());
        steps_done = step + 1;

        std::string reason = bad_params ? "non-finite parameters"
                                        : collapse_reason(result.metrics, config.collapse_window, config.kl_limit,
                                                          config.grad_spike_factor);
        if (!bad_params && config.checkpoint_interval > 0 && steps_done % config.checkpoint_interval == 0) {
            save_policy(checkpoint_path(run_dir, steps_done).string(), result.params);
            last_saved = steps_done;
        }
        if (!reason.empty()) {
            result.collapsed = true;
            result.stop_reason = "collapse: " + reason + " at step " + std::to_string(step);
            break;
        }
    }

    if (last_saved != steps_done && result.params.all_finite()) {
        save_policy(checkpoint_path(run_dir, steps_done).string(), result.params);
    }
    write_text(run_dir / "status", result.stop_reason + "\n");
    return result;
}

}  // namespace criticsearch
