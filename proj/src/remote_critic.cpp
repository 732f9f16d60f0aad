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


#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "criticsearch/critic.hpp"
#include "criticsearch/errors.hpp"

namespace criticsearch {

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;    // prefix + /chat/completions
};

Endpoint split_url(const std::string& base_url) {
    const auto scheme = base_url.find("://");
    if (scheme == std::string::npos) throw ConfigError("critic base_url needs a scheme: " + base_url);
    const auto slash = base_url.find('/', scheme + 3);
    Endpoint ep;
    ep.origin = base_url.substr(0, slash);
    std::string prefix = slash == std::string::npos ? "" : base_url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    ep.path = prefix + "/chat/completions";
    return ep;
}

std::string api_key(const CriticEndpointConfig& config) {
    if (!config.api_key.empty()) return config.api_key;
    const char* env = std::getenv("CRITIC_API_KEY");
    return env ? env : "";
}

// Completion text, or nullopt on transport/HTTP/shape failure (reason set).
std::optional<std::string> request_once(httplib::Client& client, const Endpoint& ep, const std::string& body,
                                        const httplib::Headers& headers, std::string& reason) {
    auto res = client.Post(ep.path, headers, body, "application/json");
    if (!res) {
        reason = "transport error: " + httplib::to_string(res.error());
        return std::nullopt;
    }
    if (res->status < 200 || res->status >= 300) {
        reason = "HTTP " + std::to_string(res->status);
        return std::nullopt;
    }
    try {
        const auto doc = nlohmann::json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        reason = std::string("unexpected response body: ") + e.what();
        return std::nullopt;
    }
}

}  // namespace

CritiqueVerdict remote_judge(const CriticEndpointConfig& config, std::string_view prompt, int expected_n) {
    if (config.max_retries < 0) throw ConfigError("max_retries must be >= 0");
    const Endpoint ep = split_url(config.base_url);
    httplib::Client client(ep.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (const std::string key = api_key(config); !key.empty()) headers.emplace("Authorization", "Bearer " + key);

    const nlohmann::json request = {{"model", config.model_name},
                                    {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                                    {"temperature", config.temperature}};
    const std::string body = request.dump();

    CritiqueVerdict verdict;
    verdict.source = CriticSource::Remote;
    bool any_response = false;
    std::string last_reason;
    auto backoff = config.retry_backoff;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        if (attempt > 0 && backoff.count() > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        const auto text = request_once(client, ep, body, headers, last_reason);
        if (!text) continue;
        any_response = true;
        verdict.raw_text = *text;
        try {
            verdict.labels = parse_scores(*text, expected_n);
            verdict.parse_ok = true;
            return verdict;
        } catch (const ScoreParseError& e) {
            last_reason = e.what();
        }
    }
    if (!any_response) {
        throw EndpointError("critic endpoint " + config.base_url + " failed after " +
                            std::to_string(config.max_retries + 1) + " attempts: " + last_reason);
    }
    verdict.labels.clear();
    verdict.parse_ok = false;
    return verdict;
}

std::vector<CritiqueVerdict> remote_judge_batch(const CriticEndpointConfig& config,
                                                std::span<const std::string> prompts,
                                                std::span<const int> expected_n) {
    if (prompts.size() != expected_n.size()) throw ShapeError("one expected count per prompt");
    if (config.max_in_flight < 1) throw ConfigError("max_in_flight must be >= 1");
    std::vector<CritiqueVerdict> out(prompts.size());
    std::vector<std::exception_ptr> errors(prompts.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < prompts.size(); i = next++) {
            try {
                out[i] = remote_judge(config, prompts[i], expected_n[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.max_in_flight), prompts.size());
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    if (n_threads > 0) worker();
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return out;
}

}  // namespace criticsearch
