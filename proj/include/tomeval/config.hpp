#pragma once

// Run configuration: one JSON document; the CLI overrides individual keys with flags.
// Relative paths are resolved against the directory holding the config file.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tomeval/corpus.hpp"
#include "tomeval/error.hpp"
#include "tomeval/model_client.hpp"
#include "tomeval/prompting.hpp"
#include "tomeval/runner.hpp"

namespace tomeval {

struct DatasetConfig {
    std::string id;
    std::filesystem::path path;
    Benchmark benchmark = Benchmark::tomato;
};

struct JudgeConfig {
    BackendDescriptor backend;
    Method method_a = Method::soo_prefixing;
    Method method_b = Method::cot_prefixing;
    std::uint32_t run_index = 0;
    GenParams params;
};

struct AnalyzeConfig {
    std::size_t min_count = 20;
    double z_crit = 1.96;
    int bin_width = 20;
};

struct RunConfig {
    std::vector<DatasetConfig> datasets;
    std::vector<Method> methods;
    BackendDescriptor backend;
    GenParams params;
    std::uint32_t runs = 3;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "runs";
    int parallelism = 8;
    TokenizerMode tokenizer = TokenizerMode::whitespace;
    std::string token_count_command;
    FilterPolicy filter{true, "en"};
    LoadMode load_mode = LoadMode::lenient;
    JudgeConfig judge;
    AnalyzeConfig analyze;

    TokenCounter token_counter() const {
        return tokenizer == TokenizerMode::external ? TokenCounter(token_count_command) : TokenCounter();
    }
};

namespace config_detail {

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base.empty() ? base / path : path;
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null()) {
        try {
            out = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config key '") + key + "': " + e.what());
        }
    }
}

inline Method method_or_throw(const std::string& s) {
    auto m = parse_method(s);
    if (!m) throw ConfigError("unknown method '" + s + "'");
    return *m;
}

inline Benchmark benchmark_or_throw(const std::string& s) {
    auto b = parse_benchmark(s);
    if (!b) throw ConfigError("unknown benchmark '" + s + "' (expected tomato or tombench)");
    return *b;
}

inline void read_params(const nlohmann::json& j, GenParams& p) {
    read(j, "temperature", p.temperature);
    read(j, "top_p", p.top_p);
    read(j, "max_new_tokens", p.max_new_tokens);
    read(j, "sampling_enabled", p.sampling_enabled);
    if (auto it = j.find("seed"); it != j.end() && !it->is_null()) p.seed = it->get<std::uint64_t>();
}

inline void read_backend(const nlohmann::json& j, const std::filesystem::path& base, BackendDescriptor& b) {
    if (auto it = j.find("kind"); it != j.end()) {
        auto k = parse_backend_kind(it->get<std::string>());
        if (!k) throw ConfigError("unknown backend kind '" + it->get<std::string>() + "'");
        b.kind = *k;
    }
    read(j, "name", b.name);
    read(j, "supports_prefill", b.supports_prefill);
    read(j, "base_url", b.base_url);
    read(j, "path", b.path);
    read(j, "model", b.model);
    read(j, "api_key_env", b.api_key_env);
    read(j, "timeout_seconds", b.timeout_seconds);
    if (auto it = j.find("extra_body"); it != j.end() && it->is_object()) b.extra_body = *it;
    if (auto it = j.find("script"); it != j.end()) b.script_path = resolve(base, it->get<std::string>()).string();
    read(j, "max_retries", b.retry.max_retries);
    if (auto it = j.find("initial_backoff_ms"); it != j.end())
        b.retry.initial_backoff = std::chrono::milliseconds(it->get<long long>());
    read(j, "backoff_multiplier", b.retry.multiplier);
    read(j, "requests_per_minute", b.requests_per_minute);
}

} // namespace config_detail

inline RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    using namespace config_detail;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    if (auto it = j.find("datasets"); it != j.end()) {
        for (const auto& d : *it) {
            DatasetConfig dc;
            dc.path = resolve(base, d.at("path").get<std::string>());
            dc.benchmark = benchmark_or_throw(d.at("benchmark").get<std::string>());
            dc.id = d.value("id", dc.path.stem().string());
            c.datasets.push_back(std::move(dc));
        }
    }
    if (auto it = j.find("methods"); it != j.end())
        for (const auto& m : *it) c.methods.push_back(method_or_throw(m.get<std::string>()));
    if (auto it = j.find("backend"); it != j.end()) read_backend(*it, base, c.backend);
    if (auto it = j.find("params"); it != j.end()) read_params(*it, c.params);
    read(j, "runs", c.runs);
    read(j, "seed", c.seed);
    if (auto it = j.find("out_dir"); it != j.end()) c.out_dir = resolve(base, it->get<std::string>());
    read(j, "parallelism", c.parallelism);
    if (auto it = j.find("tokenizer"); it != j.end()) {
        const auto t = it->get<std::string>();
        if (t == "whitespace") c.tokenizer = TokenizerMode::whitespace;
        else if (t == "external") c.tokenizer = TokenizerMode::external;
        else throw ConfigError("unknown tokenizer '" + t + "'");
    }
    read(j, "token_count_command", c.token_count_command);
    if (auto it = j.find("filter"); it != j.end()) {
        read(*it, "require_name", c.filter.require_name);
        read(*it, "language", c.filter.language);
    }
    if (auto it = j.find("strict_load"); it != j.end() && it->get<bool>()) c.load_mode = LoadMode::strict;
    if (auto it = j.find("judge"); it != j.end()) {
        if (auto b = it->find("backend"); b != it->end()) read_backend(*b, base, c.judge.backend);
        if (auto m = it->find("method_a"); m != it->end()) c.judge.method_a = method_or_throw(m->get<std::string>());
        if (auto m = it->find("method_b"); m != it->end()) c.judge.method_b = method_or_throw(m->get<std::string>());
        read(*it, "run_index", c.judge.run_index);
        if (auto p = it->find("params"); p != it->end()) read_params(*p, c.judge.params);
    }
    if (auto it = j.find("analyze"); it != j.end()) {
        read(*it, "min_count", c.analyze.min_count);
        read(*it, "z_crit", c.analyze.z_crit);
        read(*it, "bin_width", c.analyze.bin_width);
    }
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

// Checks that referenced paths exist and values are in range.
inline void validate(const RunConfig& c, bool need_methods = true) {
    if (c.datasets.empty()) throw ConfigError("no datasets configured");
    for (const auto& d : c.datasets)
        if (!std::filesystem::exists(d.path)) throw ConfigError("dataset not found: " + d.path.string());
    if (need_methods && c.methods.empty()) throw ConfigError("no methods configured");
    if (c.runs < 1) throw ConfigError("runs must be >= 1");
    if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (c.params.top_p <= 0.0 || c.params.top_p > 1.0) throw ConfigError("top_p must be in (0, 1]");
    if (c.params.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (c.params.max_new_tokens < 1) throw ConfigError("max_new_tokens must be >= 1");
    if (c.backend.kind == BackendKind::scripted_mock && !std::filesystem::exists(c.backend.script_path))
        throw ConfigError("mock script not found: " + c.backend.script_path);
    if (c.tokenizer == TokenizerMode::external && c.token_count_command.empty())
        throw ConfigError("external tokenizer needs token_count_command");
    if (c.analyze.bin_width < 1) throw ConfigError("bin_width must be >= 1");
}

} // namespace tomeval
