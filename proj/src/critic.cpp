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


#include "criticsearch/critic.hpp"

#include <algorithm>
#include <fstream>

#include "criticsearch/errors.hpp"
#include "criticsearch/eval.hpp"
#include "criticsearch/rng.hpp"

namespace criticsearch {

namespace {

constexpr std::string_view kHashRow = "########################";

constexpr std::string_view kRules[] = {
    "If the \"search\" action contributes to the final answer or provides partially useful information, it is "
    "good.",
    "If the \"search\" action provides redundant information, or repeats a search that has already been done, it "
    "is bad.",
    "If the \"search\" action points to the wrong search direction or misleading information, it is bad.",
    "If the \"search\" action results in incorrect information due to unclear expression, it is bad.",
    "Do not evaluate the \"answer\" actions, only evaluate the \"search\" actions.",
    "If there are no search actions in the entire trajectory, only return <score></score>.",
    "Only evaluate valid \"search\" actions (queries that contain <search>...</search> and receive "
    "<information>...</information> feedback afterward).",
    "The final number of scores must match the number of \"search\" actions.",
    "Ultimately, first provide a detailed analysis of the search process, then enclose the evaluation results "
    "within a <score>...</score> tag.",
};

std::string_view trim(std::string_view s) {
    const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    while (!s.empty() && ws(s.front())) s.remove_prefix(1);
    while (!s.empty() && ws(s.back())) s.remove_suffix(1);
    return s;
}

}  // namespace

std::string_view critic_source_name(CriticSource source) {
    switch (source) {
        case CriticSource::Oracle: return "Oracle";
        case CriticSource::MonteCarlo: return "MonteCarlo";
        case CriticSource::Remote: return "Remote";
    }
    return "Oracle";
}

CriticSource critic_source_from_name(std::string_view name) {
    if (name == "Oracle" || name == "oracle") return CriticSource::Oracle;
    if (name == "MonteCarlo" || name == "mc") return CriticSource::MonteCarlo;
    if (name == "Remote" || name == "remote") return CriticSource::Remote;
    throw ConfigError("unknown critic '" + std::string(name) + "'");
}

std::string build_critique_prompt(std::string_view question, std::string_view rendered_trajectory,
                                  std::string_view gold_answer, std::string_view extracted_answer,
                                  bool include_gold) {
    std::string p;
    p += "Please analyze whether each search process is good or bad, and include the final evaluation result "
         "within a <score>...</score> tag. If it is good, output 1; if it is bad, output 0. For example, if there "
         "are two actions, output <score>1, 1</score>; if there are four actions, output <score>1, 0, 0, "
         "1</score>.\n";
    p += "When making judgments, strictly follow these rules:\n";
    int n = 1;
    for (std::string_view rule : kRules) {
        p += "    ";
        p += std::to_string(n++);
        p += ". ";
        p += rule;
        p += '\n';
    }
    p += '\n';
    p += kHashRow;
    p += '\n';
    p += kHashRow;
    p += '\n';
    if (include_gold) {
        p += "Golden answers: ";
        p += gold_answer;
        p += '\n';
    }
    p += "Extracted answer: ";
    p += extracted_answer;
    p += '\n';
    p += "Solution string: Question: ";
    p += question;
    p += '\n';
    p += rendered_trajectory;
    if (!rendered_trajectory.empty() && rendered_trajectory.back() != '\n') p += '\n';
    p += kHashRow;
    p += '\n';
    p += kHashRow;
    p += "\n\n";
    p += "Please conduct a detailed analysis.\n";
    p += "The final number of scores should be consistent with the number of search actions.";
    return p;
}

std::string format_scores(std::span<const Label> labels) {
    std::string out = "<score>";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i > 0) out += ", ";
        out += labels[i] == Label::Good ? '1' : '0';
    }
    out += "</score>";
    return out;
}

std::vector<Label> parse_scores(std::string_view text, int expected_n) {
    const auto open = text.rfind("<score>");
    if (open == std::string_view::npos) throw MissingScore("no <score> tag");
    const auto body_start = open + std::string_view("<score>").size();
    const auto close = text.find("</score>", body_start);
    if (close == std::string_view::npos) throw MissingScore("unterminated <score> tag");
    const std::string_view body = trim(text.substr(body_start, close - body_start));

    std::vector<Label> labels;
    if (!body.empty()) {
        std::size_t pos = 0;
        while (true) {
            const auto comma = body.find(',', pos);
            const std::string_view entry =
                trim(body.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
            if (entry == "1") {
                labels.push_back(Label::Good);
            } else if (entry == "0") {
                labels.push_back(Label::Bad);
            } else {
                throw BadToken("score entry '" + std::string(entry) + "' is not 0 or 1");
            }
            if (comma == std::string_view::npos) break;
            pos = comma + 1;
        }
    }
    if (static_cast<int>(labels.size()) != expected_n) {
        throw CountMismatch("expected " + std::to_string(expected_n) + " scores, got " +
                            std::to_string(labels.size()));
    }
    return labels;
}

CritiqueVerdict oracle_judge(const Trajectory& traj, const Question& question, const KnowledgeBase&) {
    std::vector<Query> gold;
    for (const Triple& t : question.gold_path) gold.push_back({t.head, t.relation});
    std::vector<Query> queried;
    CritiqueVerdict v;
    v.source = CriticSource::Oracle;
    for (const Turn& turn : traj.turns) {
        if (turn.kind != TurnKind::Search) continue;
        const auto q = as_query(parse_turn_action(turn.action_tokens).content);
        bool good = false;
        if (q) {
            const bool repeat = std::find(queried.begin(), queried.end(), *q) != queried.end();
            const bool on_path = std::find(gold.begin(), gold.end(), *q) != gold.end();
            good = on_path && !repeat;
            queried.push_back(*q);
        }
        v.labels.push_back(good ? Label::Good : Label::Bad);
    }
    return v;
}

std::vector<Label> outcome_labels(const Trajectory& traj, const Question& question) {
    const bool correct = traj.extracted_answer && eval_em(*traj.extracted_answer, answer_text(question.gold_answer));
    return std::vector<Label>(traj.search_turn_count(), correct ? Label::Good : Label::Bad);
}

CritiqueVerdict mc_judge(const Trajectory& traj, const PolicyParams& params, const Question& question,
                         const KnowledgeBase& kb, const EnvConfig& env, const McOptions& options,
                         std::uint64_t seed) {
    if (options.n_rollouts < 1) throw ConfigError("n_rollouts must be >= 1");
    const std::string gold = answer_text(question.gold_answer);
    CritiqueVerdict v;
    v.source = CriticSource::MonteCarlo;
    for (std::size_t t = 0; t < traj.turns.size(); ++t) {
        if (traj.turns[t].kind != TurnKind::Search) continue;
        double total = 0.0;
        for (int j = 0; j < options.n_rollouts; ++j) {
            const Trajectory cont = continue_trajectory(params, question, kb, env, options.sampling, traj, t + 1,
                                                        derive_seed({seed, t, static_cast<std::uint64_t>(j)}));
            total += global_reward(cont.extracted_answer, gold, check_format(cont), options.lambda_f);
        }
        const double mean = total / options.n_rollouts;
        v.value_estimates.push_back(mean);
        v.labels.push_back(mean >= options.threshold ? Label::Good : Label::Bad);
    }
    return v;
}

std::string critique_prompt_for(const Trajectory& traj, const Question& question, const KnowledgeBase& kb,
                                bool include_gold) {
    return build_critique_prompt(question_text(question), serialize_trajectory(traj, kb),
                                 answer_text(question.gold_answer), traj.extracted_answer.value_or(""),
                                 include_gold);
}

double label_agreement(std::span<const Label> a, std::span<const Label> b) {
    if (a.size() != b.size()) throw ShapeError("label sequences differ in length");
    if (a.empty()) return 1.0;
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

double label_agreement(std::span<const std::vector<Label>> a, std::span<const std::vector<Label>> b) {
    if (a.size() != b.size()) throw ShapeError("verdict sets differ in size");
    std::size_t same = 0, total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].size() != b[i].size()) throw ShapeError("label sequences differ in length at " + std::to_string(i));
        for (std::size_t j = 0; j < a[i].size(); ++j) same += a[i][j] == b[i][j];
        total += a[i].size();
    }
    return total == 0 ? 1.0 : static_cast<double>(same) / static_cast<double>(total);
}

nlohmann::json verdict_to_json(const CritiqueVerdict& verdict, std::string_view question_id) {
    nlohmann::json labels = nlohmann::json::array();
    for (Label l : verdict.labels) labels.push_back(label_name(l));
    return {{"question_id", question_id},
            {"source", critic_source_name(verdict.source)},
            {"labels", labels},
            {"parse_ok", verdict.parse_ok}};
}

CritiqueVerdict verdict_from_json(const nlohmann::json& record) {
    try {
        CritiqueVerdict v;
        v.source = critic_source_from_name(record.at("source").get<std::string>());
        v.parse_ok = record.at("parse_ok").get<bool>();
        for (const auto& l : record.at("labels")) v.labels.push_back(label_from_name(l.get<std::string>()));
        return v;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad verdict record: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(e.what());
    }
}

std::vector<VerdictRecord> read_verdicts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw RunError("cannot open " + path);
    std::vector<VerdictRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
            out.push_back({rec.at("question_id").get<std::string>(), verdict_from_json(rec)});
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace criticsearch
