#pragma once

// Generation over chat-completion backends with assistant-prefill support.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

#include "tomeval/error.hpp"
#include "tomeval/prompting.hpp"
#include "tomeval/rng.hpp"

namespace tomeval {

struct GenParams {
    double temperature = 0.6;
    double top_p = 0.9;
    int max_new_tokens = 1024;
    bool sampling_enabled = true;
    std::optional<std::uint64_t> seed;

    bool operator==(const GenParams&) const = default;
};

inline nlohmann::json to_json(const GenParams& p) {
    nlohmann::json j;
    j["temperature"] = p.temperature;
    j["top_p"] = p.top_p;
    j["max_new_tokens"] = p.max_new_tokens;
    j["sampling_enabled"] = p.sampling_enabled;
    j["seed"] = p.seed ? nlohmann::json(*p.seed) : nlohmann::json(nullptr);
    return j;
}

enum class BackendKind { http_chat, scripted_mock, uniform_choice_mock };

inline std::string_view to_string(BackendKind k) {
    switch (k) {
    case BackendKind::http_chat: return "http_chat";
    case BackendKind::scripted_mock: return "scripted_mock";
    case BackendKind::uniform_choice_mock: return "uniform_choice_mock";
    }
    return "?";
}

inline std::optional<BackendKind> parse_backend_kind(std::string_view s) {
    for (auto k : {BackendKind::http_chat, BackendKind::scripted_mock, BackendKind::uniform_choice_mock})
        if (to_string(k) == s) return k;
    return std::nullopt;
}

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
};

struct BackendDescriptor {
    BackendKind kind = BackendKind::scripted_mock;
    // Short identifier used in log file names; defaults to the kind.
    std::string name;
    bool supports_prefill = true;

    // http_chat
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_seconds = 120;
    // Merged into every request body, e.g. {"continue_final_message": true} for vLLM.
    nlohmann::json extra_body = nlohmann::json::object();

    // scripted_mock
    std::string script_path;

    RetryPolicy retry;
    // 0 disables rate limiting.
    double requests_per_minute = 0.0;

    std::string id() const { return name.empty() ? std::string(to_string(kind)) : name; }
};

struct Completion {
    std::string record_id;
    std::string method;
    std::string raw_text;
    std::optional<std::string> prefix;
    std::string finish_reason;
    double latency_ms = 0.0;
    int attempt_count = 0;
};

struct CallContext {
    std::uint32_t run_index = 0;
    std::uint64_t seed = 0;
};

struct BackendReply {
    std::string text;
    std::string finish_reason = "stop";
    // The backend reports that text already starts with the prefill.
    bool includes_prefix = false;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendReply complete(const ChatRequest& request, const GenParams& params,
                                  const CallContext& ctx) = 0;
    virtual bool supports_prefill() const = 0;
    virtual std::string id() const = 0;
    virtual bool is_mock() const { return true; }
};

// ---------------------------------------------------------------------------
// Mock backends

// Replays completions keyed by (record_id, method, run_index). Entries without a
// run_index apply to every run.
class ScriptedMock : public Backend {
public:
    ScriptedMock() = default;

    static ScriptedMock from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open mock script " + path);
        ScriptedMock mock;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                auto j = nlohmann::json::parse(line);
                std::optional<std::uint32_t> run;
                if (j.contains("run_index") && !j["run_index"].is_null())
                    run = j["run_index"].get<std::uint32_t>();
                mock.add(j.at("record_id").get<std::string>(), j.at("method").get<std::string>(), run,
                         j.at("text").get<std::string>());
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        return mock;
    }

    void add(const std::string& record_id, const std::string& method, std::optional<std::uint32_t> run_index,
             std::string text) {
        entries_[{record_id, method, run_index ? static_cast<std::int64_t>(*run_index) : -1}] = std::move(text);
    }

    BackendReply complete(const ChatRequest& request, const GenParams&, const CallContext& ctx) override {
        auto it = entries_.find({request.record_id, request.method, static_cast<std::int64_t>(ctx.run_index)});
        if (it == entries_.end()) it = entries_.find({request.record_id, request.method, -1});
        if (it == entries_.end())
            throw Error("no scripted completion for (" + request.record_id + ", " + request.method + ", " +
                        std::to_string(ctx.run_index) + ")");
        return BackendReply{it->second, "stop", false};
    }

    bool supports_prefill() const override { return prefill_; }
    void set_supports_prefill(bool v) { prefill_ = v; }
    std::string id() const override { return "scripted_mock"; }
    std::size_t size() const { return entries_.size(); }

private:
    bool prefill_ = true;
    std::map<std::tuple<std::string, std::string, std::int64_t>, std::string> entries_;
};

// Answers "[A]".."[D]" uniformly from the per-record stream.
class UniformChoiceMock : public Backend {
public:
    explicit UniformChoiceMock(bool prefill = true) : prefill_(prefill) {}

    BackendReply complete(const ChatRequest& request, const GenParams&, const CallContext& ctx) override {
        StreamRng rng(stream_seed(ctx.seed, request.record_id, ctx.run_index, "uniform_choice"));
        std::string letter = std::string("[") + static_cast<char>('A' + rng.below(4)) + "]";
        return BackendReply{request.assistant_prefix ? " " + letter : letter, "stop", false};
    }

    bool supports_prefill() const override { return prefill_; }
    std::string id() const override { return "uniform_choice_mock"; }

private:
    bool prefill_;
};

// Adapts a callable; used for judges driven by fixtures and for tests.
class FunctionBackend : public Backend {
public:
    using Fn = std::function<BackendReply(const ChatRequest&, const GenParams&, const CallContext&)>;

    FunctionBackend(Fn fn, bool prefill, std::string name = "function")
        : fn_(std::move(fn)), prefill_(prefill), name_(std::move(name)) {}

    BackendReply complete(const ChatRequest& r, const GenParams& p, const CallContext& c) override {
        return fn_(r, p, c);
    }
    bool supports_prefill() const override { return prefill_; }
    std::string id() const override { return name_; }

private:
    Fn fn_;
    bool prefill_;
    std::string name_;
};

// ---------------------------------------------------------------------------
// Client

class TokenBucket {
public:
    explicit TokenBucket(double requests_per_minute, double burst = 1.0)
        : rate_per_sec_(requests_per_minute / 60.0), capacity_(burst), tokens_(burst),
          last_(std::chrono::steady_clock::now()) {}

    void acquire() {
        if (rate_per_sec_ <= 0.0) return;
        std::unique_lock lock(mutex_);
        for (;;) {
            auto now = std::chrono::steady_clock::now();
            tokens_ = std::min(capacity_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_per_sec_);
            last_ = now;
            if (tokens_ >= 1.0) {
                tokens_ -= 1.0;
                return;
            }
            auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_per_sec_);
            lock.unlock();
            std::this_thread::sleep_for(wait);
            lock.lock();
        }
    }

private:
    double rate_per_sec_;
    double capacity_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mutex_;
};

class ModelClient {
public:
    ModelClient(std::shared_ptr<Backend> backend, RetryPolicy retry = {}, double requests_per_minute = 0.0,
                int max_in_flight = 8)
        : backend_(std::move(backend)), retry_(retry), bucket_(requests_per_minute),
          max_in_flight_(max_in_flight < 1 ? 1 : max_in_flight) {}

    Backend& backend() { return *backend_; }
    bool supports_prefill() const { return backend_->supports_prefill(); }

    // Fails before any call when a prefill is requested from a backend that cannot continue it.
    void check_capability(const ChatRequest& request) const {
        if (request.assistant_prefix && !backend_->supports_prefill())
            throw CapabilityViolation("method " + request.method + " needs assistant prefill but backend " +
                                      backend_->id() + " does not support it");
    }

    Completion generate(const ChatRequest& request, const GenParams& params, const CallContext& ctx) {
        check_capability(request);
        InFlight slot(*this);

        Completion c;
        c.record_id = request.record_id;
        c.method = request.method;
        c.prefix = request.assistant_prefix;
        const auto start = std::chrono::steady_clock::now();

        int prefix_rejections = 0;
        int transient_failures = 0;
        auto backoff = retry_.initial_backoff;
        for (;;) {
            ++c.attempt_count;
            bucket_.acquire();
            BackendReply reply;
            try {
                reply = backend_->complete(request, params, ctx);
            } catch (const TransientError& e) {
                if (++transient_failures > retry_.max_retries)
                    throw TransportExhausted("giving up after " + std::to_string(c.attempt_count) +
                                             " attempts: " + e.what());
                std::this_thread::sleep_for(backoff);
                backoff = std::chrono::milliseconds(static_cast<long long>(backoff.count() * retry_.multiplier));
                continue;
            }
            auto text = normalize(request, reply);
            if (!text) {
                if (++prefix_rejections > 1)
                    throw MalformedResponse("completion for " + request.record_id +
                                            " does not start with the injected prefix");
                continue;
            }
            c.raw_text = std::move(*text);
            c.finish_reason = reply.finish_reason;
            break;
        }
        c.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return c;
    }

    // prefix ++ continuation for prefilled requests; an exact leading repeat of the
    // prefix is dropped. nullopt when the reply claims to carry the prefix but does not.
    static std::optional<std::string> normalize(const ChatRequest& request, const BackendReply& reply) {
        if (!request.assistant_prefix) return reply.text;
        const auto& prefix = *request.assistant_prefix;
        const bool repeated = reply.text.compare(0, prefix.size(), prefix) == 0;
        if (reply.includes_prefix) {
            if (!repeated) return std::nullopt;
            return reply.text;
        }
        if (repeated) return reply.text;
        return prefix + reply.text;
    }

private:
    class InFlight {
    public:
        explicit InFlight(ModelClient& c) : c_(c) {
            std::unique_lock lock(c_.gate_mutex_);
            c_.gate_cv_.wait(lock, [&] { return c_.in_flight_ < c_.max_in_flight_; });
            ++c_.in_flight_;
        }
        ~InFlight() {
            {
                std::lock_guard lock(c_.gate_mutex_);
                --c_.in_flight_;
            }
            c_.gate_cv_.notify_one();
        }
        InFlight(const InFlight&) = delete;
        InFlight& operator=(const InFlight&) = delete;

    private:
        ModelClient& c_;
    };

    std::shared_ptr<Backend> backend_;
    RetryPolicy retry_;
    TokenBucket bucket_;
    int max_in_flight_;
    int in_flight_ = 0;
    std::mutex gate_mutex_;
    std::condition_variable gate_cv_;
};

// ---------------------------------------------------------------------------
// Capability probe

struct CapabilityReport {
    bool reachable = false;
    bool supports_prefill = false;
    std::string detail;
};

inline constexpr std::string_view kProbePrefill = "The quick brown fox jumps over the lazy";

inline ChatRequest probe_request() {
    ChatRequest r;
    r.system = "You are a helpful assistant.";
    r.user = "Complete the sentence.";
    r.assistant_prefix = std::string(kProbePrefill);
    r.record_id = "__probe__";
    r.method = "probe";
    return r;
}

// A backend that continues the prefill produces "dog" (alone or after an echo of the
// prefill); one that ignores it answers the user turn afresh.
inline CapabilityReport probe_uncached(Backend& backend) {
    CapabilityReport report;
    if (backend.is_mock()) {
        report.reachable = true;
        report.supports_prefill = backend.supports_prefill();
        report.detail = "mock backend";
        return report;
    }
    GenParams params;
    params.temperature = 0.0;
    params.sampling_enabled = false;
    params.max_new_tokens = 1;
    BackendReply reply;
    try {
        reply = backend.complete(probe_request(), params, CallContext{});
    } catch (const TransientError& e) {
        throw TransportExhausted(std::string("backend unreachable: ") + e.what());
    }
    report.reachable = true;
    std::string text = reply.text;
    if (text.compare(0, kProbePrefill.size(), kProbePrefill) == 0) text = text.substr(kProbePrefill.size());
    for (auto& ch : text) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    auto first = text.find_first_not_of(" \t\r\n");
    report.supports_prefill = first != std::string::npos && text.compare(first, 3, "dog") == 0;
    report.detail = "probe reply: " + reply.text;
    return report;
}

inline CapabilityReport probe_backend(Backend& backend) {
    static std::mutex mutex;
    static std::map<std::string, CapabilityReport> cache;
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(backend.id()); it != cache.end()) return it->second;
    }
    auto report = probe_uncached(backend);
    std::lock_guard lock(mutex);
    return cache.emplace(backend.id(), report).first->second;
}

} // namespace tomeval
