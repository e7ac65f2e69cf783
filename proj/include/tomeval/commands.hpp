#pragma once

// The evaluate / judge / analyze / report / probe commands, callable without the CLI parser.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tomeval/config.hpp"
#include "tomeval/corpus.hpp"
#include "tomeval/http_backend.hpp"
#include "tomeval/judge.hpp"
#include "tomeval/model_client.hpp"
#include "tomeval/report.hpp"
#include "tomeval/runner.hpp"
#include "tomeval/stats.hpp"

namespace tomeval {

namespace commands_detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

// Writes name.md and name.csv under dir and echoes the markdown.
inline void emit_table(const std::filesystem::path& dir, const std::string& name, const Table& t, std::ostream& os) {
    const auto md = to_markdown(t);
    write_file(dir / (name + ".md"), md);
    write_file(dir / (name + ".csv"), to_csv(t));
    os << md << '\n';
}

struct LoadedDataset {
    DatasetConfig config;
    std::vector<QuestionRecord> records;
    std::vector<Exclusion> excluded;
};

inline LoadedDataset load_filtered(const RunConfig& c, const DatasetConfig& d) {
    LoadedDataset out;
    out.config = d;
    auto all = load_dataset(d.path.string(), d.benchmark, c.load_mode);
    auto filtered = filter_records(all, c.filter);
    out.records = std::move(filtered.kept);
    out.excluded = std::move(filtered.excluded);
    return out;
}

inline void write_exclusions(const std::filesystem::path& dir, const LoadedDataset& d) {
    std::string text;
    for (const auto& e : d.excluded) {
        nlohmann::json j;
        j["id"] = e.record.id;
        j["reason"] = to_string(e.reason);
        j["detail"] = e.detail;
        text += j.dump() + "\n";
    }
    write_file(dir / (sanitize_component(d.config.id) + "__excluded.jsonl"), text);
}

// Logs for (dataset, method, backend, seed), ordered by run index.
inline std::vector<RunLog> find_logs(const RunConfig& c, const std::string& dataset, Method method) {
    std::vector<RunLog> logs;
    for (std::uint32_t run = 0; run < c.runs; ++run) {
        RunHeader h;
        h.dataset = dataset;
        h.method = std::string(to_string(method));
        h.backend = c.backend.id();
        h.seed = c.seed;
        h.run_index = run;
        const auto path = c.out_dir / log_file_name(h);
        if (!std::filesystem::exists(path)) {
            if (run == 0) throw ConfigError("missing run log " + path.string() + " (run evaluate first)");
            break;
        }
        logs.push_back(read_run_log(path));
    }
    return logs;
}

inline std::filesystem::path report_dir(const RunConfig& c) { return c.out_dir / "reports"; }

inline bool has_order(const std::vector<QuestionRecord>& rs, Order o) {
    return std::any_of(rs.begin(), rs.end(), [&](const QuestionRecord& r) { return r.order == o; });
}

inline bool has_personality(const std::vector<QuestionRecord>& rs) {
    return std::any_of(rs.begin(), rs.end(), [](const QuestionRecord& r) { return !r.personality.empty(); });
}

inline void emit_accuracy_tables(const RunConfig& c, const std::string& dataset,
                                 const std::vector<QuestionRecord>& records, const std::vector<ScoreReport>& reports,
                                 std::ostream& os) {
    const auto dir = report_dir(c);
    const auto stem = sanitize_component(dataset);
    std::vector<ScoreReport> main;
    for (const auto& r : reports) {
        auto m = parse_method(r.method);
        if (m && (*m == Method::soo_prefix_others || *m == Method::soo_prefix_shoes_of_others)) continue;
        main.push_back(r);
    }
    if (!main.empty()) {
        emit_table(dir, stem + "__first_order",
                   accuracy_table(main, RowScope::first_order, "First-order accuracy (%) on " + dataset), os);
        if (has_order(records, Order::second))
            emit_table(dir, stem + "__second_order",
                       second_order_table(main, "Second-order accuracy (%) on " + dataset), os);
        if (has_personality(records)) {
            emit_table(dir, stem + "__personality_first",
                       personality_table(main, Order::first, "First-order accuracy (%) by personality on " + dataset),
                       os);
            if (has_order(records, Order::second))
                emit_table(dir, stem + "__personality_second",
                           personality_table(main, Order::second,
                                             "Second-order accuracy (%) by personality on " + dataset),
                           os);
        }
    }
    const bool ablation = std::any_of(c.methods.begin(), c.methods.end(), [](Method m) {
        return m == Method::soo_prefix_others || m == Method::soo_prefix_shoes_of_others;
    });
    if (ablation) {
        std::map<std::string, std::vector<ScoreReport>> by_dataset{{dataset, reports}};
        emit_table(dir, stem + "__ablation", ablation_table(by_dataset, "Prefix ablation (%) on " + dataset), os);
    }
}

} // namespace commands_detail

// Fails with CapabilityViolation when any configured prefixing method targets a
// backend without prefill support. Touches neither files nor the network.
inline void check_methods_supported(const RunConfig& c) {
    if (c.backend.supports_prefill) return;
    for (auto m : c.methods)
        if (is_prefixing(m))
            throw CapabilityViolation(std::string(to_string(m)) + " needs assistant prefill but backend " +
                                      c.backend.id() + " is configured without it");
}

struct EvaluateResult {
    std::map<std::string, std::vector<ScoreReport>> reports;
};

inline EvaluateResult cmd_evaluate(const RunConfig& c, std::ostream& os = std::cout,
                                   std::optional<std::size_t> stop_after_items = std::nullopt) {
    using namespace commands_detail;
    check_methods_supported(c);
    validate(c);
    auto backend = make_backend(c.backend);
    ModelClient client(backend, c.backend.retry, c.backend.requests_per_minute, c.parallelism);

    EvaluateResult result;
    for (const auto& d : c.datasets) {
        auto data = load_filtered(c, d);
        write_exclusions(c.out_dir, data);
        os << d.id << ": " << data.records.size() << " records kept, " << data.excluded.size() << " excluded\n";
        std::vector<ScoreReport> reports;
        for (auto m : c.methods) {
            RunOptions opt;
            opt.dataset_id = d.id;
            opt.backend_id = c.backend.id();
            opt.params = c.params;
            opt.runs = c.runs;
            opt.seed = c.seed;
            opt.out_dir = c.out_dir;
            opt.parallelism = c.parallelism;
            opt.tokenizer = c.token_counter();
            opt.stop_after_items = stop_after_items;
            auto logs = run_experiment(data.records, m, client, opt);
            reports.push_back(score(logs, data.records));
        }
        os << '\n';
        emit_accuracy_tables(c, d.id, data.records, reports, os);
        result.reports[d.id] = std::move(reports);
    }
    return result;
}

// Re-renders accuracy tables from existing logs.
inline EvaluateResult cmd_report(const RunConfig& c, std::ostream& os = std::cout) {
    using namespace commands_detail;
    validate(c);
    EvaluateResult result;
    for (const auto& d : c.datasets) {
        auto data = load_filtered(c, d);
        std::vector<ScoreReport> reports;
        for (auto m : c.methods) reports.push_back(score(find_logs(c, d.id, m), data.records));
        emit_accuracy_tables(c, d.id, data.records, reports, os);
        result.reports[d.id] = std::move(reports);
    }
    return result;
}

inline std::filesystem::path judge_log_path(const RunConfig& c, const std::string& dataset) {
    return c.out_dir / judge_log_file_name(dataset, std::string(to_string(c.judge.method_a)),
                                           std::string(to_string(c.judge.method_b)), c.judge.backend.id(),
                                           c.judge.run_index, c.seed);
}

inline std::map<std::string, JudgeResult> cmd_judge(const RunConfig& c, std::ostream& os = std::cout) {
    using namespace commands_detail;
    validate(c, false);
    auto backend = make_backend(c.judge.backend);
    ModelClient judge(backend, c.judge.backend.retry, c.judge.backend.requests_per_minute, c.parallelism);

    std::map<std::string, JudgeResult> results;
    std::vector<std::pair<std::string, PairwiseStats>> summary;
    for (const auto& d : c.datasets) {
        auto data = load_filtered(c, d);
        auto logs_a = find_logs(c, d.id, c.judge.method_a);
        auto logs_b = find_logs(c, d.id, c.judge.method_b);
        if (select_comparable(logs_a, logs_b, c.judge.run_index).empty())
            os << d.id << ": no records answered correctly by both methods; judging skipped\n";
        JudgeOptions opt;
        opt.seed = c.seed;
        opt.run_index = c.judge.run_index;
        opt.params = c.judge.params;
        opt.parallelism = c.parallelism;
        opt.log_path = judge_log_path(c, d.id);
        opt.judge_id = c.judge.backend.id();
        auto r = compare_methods(logs_a, logs_b, data.records, judge, opt);
        const std::string vs = method_label(r.method_a) + " vs " + method_label(r.method_b);
        const auto stem = sanitize_component(d.id);
        emit_table(report_dir(c), stem + "__winrate",
                   winrate_table(r.stats, vs + " faithfulness (judge win rate) on " + d.id), os);
        if (has_personality(data.records))
            emit_table(report_dir(c), stem + "__winrate_facets",
                       winrate_table(r.stats, vs + " faithfulness by personality on " + d.id, true), os);
        summary.emplace_back(d.id, r.stats.back());
        results[d.id] = std::move(r);
    }
    emit_table(report_dir(c), "winrate_summary", winrate_summary_table(summary, "Faithfulness (judge win rate), ALL"),
               os);
    return results;
}

struct AnalyzeResult {
    std::vector<ScatterPoint> accuracy_vs_winrate;
    std::vector<ScatterPoint> accuracy_vs_length;
    std::vector<ScatterPoint> winrate_vs_length;
    std::vector<LengthStats> lengths;
    std::vector<WordStat> words;
};

// Per-subset mean thought length over all runs.
inline std::map<std::string, double> subset_lengths(const std::vector<RunLog>& logs,
                                                    const std::vector<QuestionRecord>& records) {
    std::map<std::string, const QuestionRecord*> index;
    for (const auto& r : records) index.emplace(r.id, &r);
    std::map<std::string, std::pair<double, std::size_t>> acc;
    for (const auto& l : logs)
        for (const auto& item : l.items) {
            auto it = index.find(item.record_id);
            if (it == index.end()) throw Error("unknown record_id " + item.record_id);
            auto& slot = acc[GroupFilter::of(subset_key(*it->second)).label()];
            slot.first += item.thought_token_count;
            ++slot.second;
        }
    std::map<std::string, double> out;
    for (const auto& [label, s] : acc) out[label] = s.first / static_cast<double>(s.second);
    return out;
}

inline std::map<std::string, AnalyzeResult> cmd_analyze(const RunConfig& c, std::ostream& os = std::cout) {
    using namespace commands_detail;
    validate(c, false);
    std::map<std::string, AnalyzeResult> results;
    const auto dir = report_dir(c);
    for (const auto& d : c.datasets) {
        auto data = load_filtered(c, d);
        const auto logs_a = find_logs(c, d.id, c.judge.method_a);
        const auto logs_b = find_logs(c, d.id, c.judge.method_b);
        const auto judge_path = judge_log_path(c, d.id);
        if (!std::filesystem::exists(judge_path))
            throw ConfigError("missing judge log " + judge_path.string() + " (run judge first)");
        auto judge_log = read_jsonl_log(judge_path);
        std::vector<JudgeItem> judged;
        for (const auto& j : judge_log.items) judged.push_back(judge_item_from_json(j));
        const auto pairwise = aggregate(judged, data.records);

        const auto rep_a = score(logs_a, data.records);
        const auto rep_b = score(logs_b, data.records);
        const auto len_a = subset_lengths(logs_a, data.records);
        const auto len_b = subset_lengths(logs_b, data.records);

        std::map<std::string, double> win_by_label;
        for (const auto& s : pairwise)
            if (!s.subset.facet && !s.subset.is_all() && s.win_pct()) win_by_label[s.subset.label()] = *s.win_pct();
        std::map<std::string, double> len_delta;
        for (const auto& [label, v] : len_a)
            if (auto it = len_b.find(label); it != len_b.end()) len_delta[label] = v - it->second;

        AnalyzeResult r;
        r.accuracy_vs_winrate = accuracy_deltas(rep_a.primary, rep_b.primary, win_by_label);
        r.accuracy_vs_length = accuracy_deltas(rep_a.primary, rep_b.primary, len_delta);
        for (const auto& [label, win] : win_by_label)
            if (auto it = len_delta.find(label); it != len_delta.end()) r.winrate_vs_length.push_back({label, it->second, win});

        std::vector<ItemResult> items_a, items_b;
        std::vector<std::string> thoughts_a, thoughts_b;
        for (const auto& l : logs_a)
            for (const auto& i : l.items) {
                items_a.push_back(i);
                thoughts_a.push_back(i.thought);
            }
        for (const auto& l : logs_b)
            for (const auto& i : l.items) {
                items_b.push_back(i);
                thoughts_b.push_back(i.thought);
            }
        if (!items_a.empty()) r.lengths.push_back(length_stats(items_a, c.analyze.bin_width));
        if (!items_b.empty()) r.lengths.push_back(length_stats(items_b, c.analyze.bin_width));
        if (!thoughts_a.empty() && !thoughts_b.empty())
            r.words = z_statistics(thoughts_a, thoughts_b, c.analyze.min_count, c.analyze.z_crit);

        const auto stem = sanitize_component(d.id);
        const std::string a = method_label(rep_a.method), b = method_label(rep_b.method);
        emit_table(dir, stem + "__scatter_accuracy_winrate",
                   scatter_table(r.accuracy_vs_winrate, "Accuracy increase vs win rate on " + d.id, "win_rate",
                                 "accuracy_delta"),
                   os);
        emit_table(dir, stem + "__scatter_accuracy_length",
                   scatter_table(r.accuracy_vs_length, "Accuracy increase vs length increase on " + d.id,
                                 "length_delta", "accuracy_delta"),
                   os);
        emit_table(dir, stem + "__scatter_winrate_length",
                   scatter_table(r.winrate_vs_length, "Win rate vs length increase on " + d.id, "length_delta",
                                 "win_rate"),
                   os);
        emit_table(dir, stem + "__lengths",
                   length_table(r.lengths, "Thought length on " + d.id, c.token_counter().describe()), os);
        emit_table(dir, stem + "__length_histogram", histogram_table(r.lengths, "Thought length histogram on " + d.id),
                   os);
        auto words = word_table(r.words, "Word z-statistics (" + a + " vs " + b + ") on " + d.id);
        words.notes.push_back("Chance rate " + format_fixed(chance_rate(thoughts_a.size(), thoughts_b.size()), 4) +
                              "; min_count " + std::to_string(c.analyze.min_count) + "; z_crit " +
                              format_fixed(c.analyze.z_crit, 2) + ".");
        emit_table(dir, stem + "__words", words, os);
        results[d.id] = std::move(r);
    }
    return results;
}

inline CapabilityReport cmd_probe(const BackendDescriptor& desc, std::ostream& os = std::cout) {
    auto backend = make_backend(desc);
    auto report = probe_backend(*backend);
    nlohmann::json j;
    j["backend"] = backend->id();
    j["reachable"] = report.reachable;
    j["supports_prefill"] = report.supports_prefill;
    j["detail"] = report.detail;
    os << j.dump(2) << '\n';
    return report;
}

} // namespace tomeval
