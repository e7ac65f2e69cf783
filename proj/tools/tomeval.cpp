// tomeval: evaluate, judge, analyze, report, probe.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tomeval/commands.hpp"

namespace {

using namespace tomeval;

// Flag values; unset options leave the config file's values alone.
struct Overrides {
    std::string config_path;
    std::vector<std::string> datasets;
    std::string benchmark = "tomato";
    std::vector<std::string> methods;
    std::optional<std::string> backend_kind;
    std::optional<std::string> backend_name;
    std::optional<std::string> mock_script;
    std::optional<std::string> base_url;
    std::optional<std::string> model;
    std::optional<std::string> api_key_env;
    std::optional<bool> supports_prefill;
    std::optional<std::uint32_t> runs;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> parallelism;
    std::optional<std::string> tokenizer;
    std::optional<std::string> token_count_command;
    std::optional<double> temperature;
    std::optional<double> top_p;
    std::optional<int> max_new_tokens;
    std::optional<bool> require_name;
    std::optional<std::string> method_a;
    std::optional<std::string> method_b;
    std::optional<std::string> judge_script;
    std::optional<std::uint32_t> judge_run;
    std::optional<std::size_t> min_count;
    std::optional<double> z_crit;
    std::optional<int> bin_width;
};

void add_common(CLI::App& cmd, Overrides& o) {
    cmd.add_option("-c,--config", o.config_path, "JSON config file");
    cmd.add_option("--dataset", o.datasets, "Dataset JSONL path (repeatable; replaces configured datasets)");
    cmd.add_option("--benchmark", o.benchmark, "Benchmark of --dataset files: tomato or tombench");
    cmd.add_option("--methods", o.methods, "Methods to run")->delimiter(',');
    cmd.add_option("--backend", o.backend_kind, "http_chat, scripted_mock, or uniform_choice_mock");
    cmd.add_option("--backend-name", o.backend_name, "Backend identifier used in log names");
    cmd.add_option("--mock-script", o.mock_script, "Scripted mock JSONL");
    cmd.add_option("--base-url", o.base_url, "Chat completions base URL");
    cmd.add_option("--model", o.model, "Model name sent to the endpoint");
    cmd.add_option("--api-key-env", o.api_key_env, "Environment variable holding the API key");
    cmd.add_option("--supports-prefill", o.supports_prefill, "Whether the backend continues an assistant prefill");
    cmd.add_option("--runs", o.runs, "Runs per method");
    cmd.add_option("--seed", o.seed, "Seed for all random streams");
    cmd.add_option("--out", o.out_dir, "Output directory");
    cmd.add_option("--parallelism", o.parallelism, "Concurrent requests");
    cmd.add_option("--tokenizer", o.tokenizer, "whitespace or external");
    cmd.add_option("--token-count-command", o.token_count_command, "Command reading text on stdin, printing a count");
    cmd.add_option("--temperature", o.temperature);
    cmd.add_option("--top-p", o.top_p);
    cmd.add_option("--max-new-tokens", o.max_new_tokens);
    cmd.add_option("--require-name", o.require_name, "Exclude records whose target name cannot be extracted");
    cmd.add_option("--method-a", o.method_a, "Judged method (default soo_prefixing)");
    cmd.add_option("--method-b", o.method_b, "Baseline method (default cot_prefixing)");
    cmd.add_option("--judge-script", o.judge_script, "Scripted judge JSONL (switches the judge to scripted_mock)");
    cmd.add_option("--judge-run", o.judge_run, "Run index compared by the judge");
    cmd.add_option("--min-count", o.min_count, "Minimum thoughts containing a word for z-statistics");
    cmd.add_option("--z-crit", o.z_crit, "Significance threshold for |z|");
    cmd.add_option("--bin-width", o.bin_width, "Length histogram bin width");
}

RunConfig build_config(const Overrides& o) {
    RunConfig c = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    if (!o.datasets.empty()) {
        auto b = parse_benchmark(o.benchmark);
        if (!b) throw ConfigError("unknown benchmark '" + o.benchmark + "'");
        c.datasets.clear();
        for (const auto& p : o.datasets) c.datasets.push_back({std::filesystem::path(p).stem().string(), p, *b});
    }
    if (!o.methods.empty()) {
        c.methods.clear();
        for (const auto& m : o.methods) {
            auto pm = parse_method(m);
            if (!pm) throw ConfigError("unknown method '" + m + "'");
            c.methods.push_back(*pm);
        }
    }
    if (o.backend_kind) {
        auto k = parse_backend_kind(*o.backend_kind);
        if (!k) throw ConfigError("unknown backend '" + *o.backend_kind + "'");
        c.backend.kind = *k;
    }
    if (o.backend_name) c.backend.name = *o.backend_name;
    if (o.mock_script) c.backend.script_path = *o.mock_script;
    if (o.base_url) c.backend.base_url = *o.base_url;
    if (o.model) c.backend.model = *o.model;
    if (o.api_key_env) c.backend.api_key_env = *o.api_key_env;
    if (o.supports_prefill) c.backend.supports_prefill = *o.supports_prefill;
    if (o.runs) c.runs = *o.runs;
    if (o.seed) c.seed = *o.seed;
    if (o.out_dir) c.out_dir = *o.out_dir;
    if (o.parallelism) c.parallelism = *o.parallelism;
    if (o.tokenizer) {
        if (*o.tokenizer == "whitespace") c.tokenizer = TokenizerMode::whitespace;
        else if (*o.tokenizer == "external") c.tokenizer = TokenizerMode::external;
        else throw ConfigError("unknown tokenizer '" + *o.tokenizer + "'");
    }
    if (o.token_count_command) c.token_count_command = *o.token_count_command;
    if (o.temperature) c.params.temperature = *o.temperature;
    if (o.top_p) c.params.top_p = *o.top_p;
    if (o.max_new_tokens) c.params.max_new_tokens = *o.max_new_tokens;
    if (o.require_name) c.filter.require_name = *o.require_name;
    auto method = [](const std::string& s) {
        auto m = parse_method(s);
        if (!m) throw ConfigError("unknown method '" + s + "'");
        return *m;
    };
    if (o.method_a) c.judge.method_a = method(*o.method_a);
    if (o.method_b) c.judge.method_b = method(*o.method_b);
    if (o.judge_script) {
        c.judge.backend.kind = BackendKind::scripted_mock;
        c.judge.backend.script_path = *o.judge_script;
    }
    if (o.judge_run) c.judge.run_index = *o.judge_run;
    if (o.min_count) c.analyze.min_count = *o.min_count;
    if (o.z_crit) c.analyze.z_crit = *o.z_crit;
    if (o.bin_width) c.analyze.bin_width = *o.bin_width;
    return c;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Theory-of-mind evaluation harness: prompting and prefixing methods, judging, and analysis"};
    app.require_subcommand(1);
    Overrides o;
    auto* evaluate = app.add_subcommand("evaluate", "Generate, score, and tabulate accuracy");
    auto* judge = app.add_subcommand("judge", "Pairwise faithfulness judging of two methods");
    auto* analyze = app.add_subcommand("analyze", "Correlations, length statistics, and word z-statistics");
    auto* report = app.add_subcommand("report", "Re-render accuracy tables from existing logs");
    auto* probe = app.add_subcommand("probe", "Check whether a backend continues an assistant prefill");
    for (auto* cmd : {evaluate, judge, analyze, report, probe}) add_common(*cmd, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ExitCode::config_error);
    }

    try {
        const RunConfig c = build_config(o);
        if (evaluate->parsed()) {
            cmd_evaluate(c);
        } else if (judge->parsed()) {
            cmd_judge(c);
        } else if (analyze->parsed()) {
            cmd_analyze(c);
        } else if (report->parsed()) {
            cmd_report(c);
        } else if (probe->parsed()) {
            cmd_probe(c.backend);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ExitCode::failure);
    }
    return 0;
}
