#pragma once

// Experiment execution: generate, parse, score, and persist resumable run logs.

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cctype>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>
#include <string>
#include <thread>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tomeval/corpus.hpp"
#include "tomeval/error.hpp"
#include "tomeval/jsonl_log.hpp"
#include "tomeval/model_client.hpp"
#include "tomeval/prompting.hpp"

namespace tomeval {

// ---------------------------------------------------------------------------
// Answer and thought extraction

enum class Choice { A, B, C, D, unparseable };

inline std::string_view to_string(Choice c) {
    switch (c) {
    case Choice::A: return "A";
    case Choice::B: return "B";
    case Choice::C: return "C";
    case Choice::D: return "D";
    case Choice::unparseable: return "unparseable";
    }
    return "?";
}

inline std::optional<Choice> parse_choice(std::string_view s) {
    for (auto c : {Choice::A, Choice::B, Choice::C, Choice::D, Choice::unparseable})
        if (to_string(c) == s) return c;
    return std::nullopt;
}

// Letter of the last "[A]".."[D]" token in the text.
inline Choice extract_choice(std::string_view text) {
    for (std::size_t i = text.size(); i >= 3; --i) {
        const std::size_t at = i - 3;
        if (text[at] == '[' && text[at + 2] == ']' && text[at + 1] >= 'A' && text[at + 1] <= 'D')
            return static_cast<Choice>(text[at + 1] - 'A');
    }
    return Choice::unparseable;
}

// The thought is the whole generated text, injected prefix included.
inline std::string extract_thought(const Completion& c) { return c.raw_text; }

// ---------------------------------------------------------------------------
// Token counting

enum class TokenizerMode { whitespace, external };

inline std::string_view to_string(TokenizerMode m) { return m == TokenizerMode::whitespace ? "whitespace" : "external"; }

inline int count_whitespace_tokens(std::string_view text) {
    int n = 0;
    bool in_token = false;
    for (unsigned char c : text) {
        const bool space = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        if (!space && !in_token) ++n;
        in_token = !space;
    }
    return n;
}

// Counts tokens with whitespace splitting or an external command that reads the text
// on stdin and prints an integer. External results are cached per text.
class TokenCounter {
public:
    TokenCounter() = default;
    explicit TokenCounter(std::string command) : mode_(TokenizerMode::external), command_(std::move(command)) {}

    TokenizerMode mode() const { return mode_; }
    std::string describe() const { return mode_ == TokenizerMode::whitespace ? "whitespace" : "external:" + command_; }

    int count(std::string_view text) const {
        if (mode_ == TokenizerMode::whitespace) return count_whitespace_tokens(text);
        {
            std::lock_guard lock(cache_->mutex);
            if (auto it = cache_->values.find(std::string(text)); it != cache_->values.end()) return it->second;
        }
        int n = run_external(text);
        std::lock_guard lock(cache_->mutex);
        cache_->values.emplace(std::string(text), n);
        return n;
    }

private:
    int run_external(std::string_view text) const {
        auto tmp = std::filesystem::temp_directory_path() /
                   ("tomeval_tok_" + std::to_string(std::hash<std::string_view>{}(text)) + "_" +
                    std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) + ".txt");
        {
            std::ofstream out(tmp, std::ios::binary);
            out << text;
        }
        const std::string cmd = command_ + " < '" + tmp.string() + "'";
        FILE* pipe = popen(cmd.c_str(), "r");
        if (!pipe) {
            std::filesystem::remove(tmp);
            throw Error("cannot run token-count command: " + command_);
        }
        std::string output;
        char buf[256];
        while (std::fgets(buf, sizeof buf, pipe)) output += buf;
        const int status = pclose(pipe);
        std::filesystem::remove(tmp);
        if (status != 0) throw Error("token-count command failed (" + std::to_string(status) + "): " + command_);
        try {
            std::size_t used = 0;
            int n = std::stoi(output, &used);
            if (n < 0) throw std::invalid_argument("negative");
            return n;
        } catch (const std::exception&) {
            throw Error("token-count command printed no integer: '" + output + "'");
        }
    }

    struct Cache {
        std::mutex mutex;
        std::unordered_map<std::string, int> values;
    };

    TokenizerMode mode_ = TokenizerMode::whitespace;
    std::string command_;
    std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

inline int count_tokens(std::string_view text, const TokenCounter& counter = TokenCounter()) {
    return counter.count(text);
}

// ---------------------------------------------------------------------------
// Run logs

struct ItemResult {
    std::string record_id;
    std::string method;
    std::uint32_t run_index = 0;
    Choice predicted = Choice::unparseable;
    bool correct = false;
    std::string thought;
    int thought_token_count = 0;
    std::optional<std::string> prefix;
    std::string finish_reason;
    int attempt_count = 0;
    std::optional<std::string> error;

    bool operator==(const ItemResult&) const = default;
};

inline nlohmann::json to_json(const ItemResult& r) {
    nlohmann::json j;
    j["record_id"] = r.record_id;
    j["method"] = r.method;
    j["run_index"] = r.run_index;
    j["predicted"] = to_string(r.predicted);
    j["correct"] = r.correct;
    j["thought"] = r.thought;
    j["thought_token_count"] = r.thought_token_count;
    j["prefix"] = r.prefix ? nlohmann::json(*r.prefix) : nlohmann::json(nullptr);
    j["finish_reason"] = r.finish_reason;
    j["attempt_count"] = r.attempt_count;
    if (r.error) j["error"] = *r.error;
    return j;
}

inline ItemResult item_from_json(const nlohmann::json& j) {
    ItemResult r;
    r.record_id = j.at("record_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.run_index = j.at("run_index").get<std::uint32_t>();
    auto p = parse_choice(j.at("predicted").get<std::string>());
    if (!p) throw Error("bad predicted value in log item " + r.record_id);
    r.predicted = *p;
    r.correct = j.at("correct").get<bool>();
    r.thought = j.at("thought").get<std::string>();
    r.thought_token_count = j.at("thought_token_count").get<int>();
    if (j.contains("prefix") && !j["prefix"].is_null()) r.prefix = j["prefix"].get<std::string>();
    r.finish_reason = j.value("finish_reason", "");
    r.attempt_count = j.value("attempt_count", 0);
    if (j.contains("error")) r.error = j["error"].get<std::string>();
    return r;
}

struct RunHeader {
    std::string dataset;
    std::string method;
    std::string backend;
    GenParams params;
    std::uint64_t seed = 0;
    std::uint32_t run_index = 0;
    std::string tokenizer = "whitespace";
    std::string created_at;
};

inline nlohmann::json to_json(const RunHeader& h) {
    nlohmann::json j;
    j["type"] = "header";
    j["dataset"] = h.dataset;
    j["method"] = h.method;
    j["backend"] = h.backend;
    j["params"] = to_json(h.params);
    j["seed"] = h.seed;
    j["run_index"] = h.run_index;
    j["tokenizer"] = h.tokenizer;
    j["created_at"] = h.created_at;
    return j;
}

inline RunHeader header_from_json(const nlohmann::json& j) {
    RunHeader h;
    h.dataset = j.at("dataset").get<std::string>();
    h.method = j.at("method").get<std::string>();
    h.backend = j.at("backend").get<std::string>();
    const auto& p = j.at("params");
    h.params.temperature = p.at("temperature").get<double>();
    h.params.top_p = p.at("top_p").get<double>();
    h.params.max_new_tokens = p.at("max_new_tokens").get<int>();
    h.params.sampling_enabled = p.at("sampling_enabled").get<bool>();
    if (!p.at("seed").is_null()) h.params.seed = p.at("seed").get<std::uint64_t>();
    h.seed = j.at("seed").get<std::uint64_t>();
    h.run_index = j.at("run_index").get<std::uint32_t>();
    h.tokenizer = j.value("tokenizer", "whitespace");
    h.created_at = j.value("created_at", "");
    return h;
}

struct RunLog {
    RunHeader header;
    std::vector<ItemResult> items;
    std::filesystem::path path;
};

inline std::string sanitize_component(std::string_view s) {
    std::string out;
    for (unsigned char c : s) out += (std::isalnum(c) || c == '-' || c == '.') ? static_cast<char>(c) : '_';
    return out.empty() ? "_" : out;
}

inline std::string log_file_name(const RunHeader& h) {
    return sanitize_component(h.dataset) + "__" + sanitize_component(h.method) + "__" +
           sanitize_component(h.backend) + "__run" + std::to_string(h.run_index) + "__seed" +
           std::to_string(h.seed) + ".jsonl";
}

inline RunLog read_run_log(const std::filesystem::path& path) {
    auto contents = read_jsonl_log(path);
    if (!contents.header) throw Error("run log " + path.string() + " has no header");
    RunLog log;
    log.header = header_from_json(*contents.header);
    log.path = path;
    std::set<std::string> seen;
    for (const auto& j : contents.items) {
        auto item = item_from_json(j);
        if (!seen.insert(item.record_id).second)
            throw Error("duplicate record_id " + item.record_id + " in " + path.string());
        log.items.push_back(std::move(item));
    }
    return log;
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// ---------------------------------------------------------------------------
// Experiment execution

struct RunOptions {
    std::string dataset_id = "dataset";
    std::string backend_id = "backend";
    GenParams params;
    std::uint32_t runs = 3;
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "runs";
    int parallelism = 1;
    TokenCounter tokenizer;
    std::function<std::string()> clock = utc_timestamp;
    // Stop after this many newly logged items per run; simulates an interrupted run.
    std::optional<std::size_t> stop_after_items;
};

inline ItemResult score_completion(const QuestionRecord& record, const Completion& c, std::uint32_t run_index,
                                   const TokenCounter& tokenizer) {
    ItemResult r;
    r.record_id = record.id;
    r.method = c.method;
    r.run_index = run_index;
    r.thought = extract_thought(c);
    r.predicted = extract_choice(r.thought);
    r.correct = r.predicted != Choice::unparseable && static_cast<int>(r.predicted) == record.answer_index;
    r.thought_token_count = tokenizer.count(r.thought);
    r.prefix = c.prefix;
    r.finish_reason = c.finish_reason;
    r.attempt_count = c.attempt_count;
    return r;
}

namespace runner_detail {

// Generates pending items with up to `parallelism` workers and hands results to
// `commit` strictly in input order, so logs do not depend on scheduling.
template <typename Produce, typename Commit>
void ordered_parallel(std::size_t count, int parallelism, Produce produce, Commit commit,
                      std::optional<std::size_t> limit) {
    using T = std::invoke_result_t<Produce&, std::size_t>;
    const std::size_t target = limit ? std::min(*limit, count) : count;
    if (target == 0) return;
    std::vector<std::optional<T>> slots(count);
    std::mutex mutex;
    std::condition_variable cv;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr fatal;
    std::size_t fatal_index = count;

    auto worker = [&] {
        for (;;) {
            if (stop.load()) return;
            const std::size_t i = next.fetch_add(1);
            if (i >= target) return;
            try {
                auto r = produce(i);
                std::lock_guard lock(mutex);
                slots[i] = std::move(r);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (i < fatal_index) {
                    fatal = std::current_exception();
                    fatal_index = i;
                }
                stop = true;
            }
            cv.notify_all();
        }
    };

    const int n_workers = std::max(1, std::min<int>(parallelism, static_cast<int>(target)));
    std::vector<std::thread> threads;
    threads.reserve(n_workers);
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);

    std::exception_ptr commit_error;
    for (std::size_t i = 0; i < target; ++i) {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return slots[i].has_value() || fatal_index <= i; });
        if (!slots[i]) break;
        auto r = std::move(*slots[i]);
        lock.unlock();
        try {
            commit(std::move(r));
        } catch (...) {
            commit_error = std::current_exception();
            stop = true;
            break;
        }
    }
    stop = true;
    for (auto& t : threads) t.join();
    if (commit_error) std::rethrow_exception(commit_error);
    if (fatal) std::rethrow_exception(fatal);
}

} // namespace runner_detail

// Runs one log per run index. Existing logs with the same header are resumed.
// Per-item failures are logged as unparseable with an error note; exhausted transport
// aborts the run after flushing completed items.
inline std::vector<RunLog> run_experiment(const std::vector<QuestionRecord>& records, const MethodSpec& method,
                                          ModelClient& client, const RunOptions& opt) {
    if (opt.runs < 1) throw ConfigError("runs must be >= 1");
    if (method.is_prefixing() && !client.supports_prefill())
        throw CapabilityViolation(std::string(to_string(method.method)) + " needs assistant prefill but backend " +
                                  client.backend().id() + " does not support it");

    std::vector<RunLog> logs;
    for (std::uint32_t run = 0; run < opt.runs; ++run) {
        RunHeader header;
        header.dataset = opt.dataset_id;
        header.method = std::string(to_string(method.method));
        header.backend = opt.backend_id;
        header.params = opt.params;
        header.seed = opt.seed;
        header.run_index = run;
        header.tokenizer = opt.tokenizer.describe();
        header.created_at = opt.clock ? opt.clock() : std::string();

        const auto path = opt.out_dir / log_file_name(header);
        std::vector<nlohmann::json> existing;
        JsonlLogWriter writer(path, to_json(header), &existing);

        RunLog log;
        log.header = header_from_json(writer.header());
        log.path = path;
        std::set<std::string> done;
        for (const auto& j : existing) {
            log.items.push_back(item_from_json(j));
            done.insert(log.items.back().record_id);
        }

        std::vector<const QuestionRecord*> pending;
        for (const auto& r : records)
            if (!done.count(r.id)) pending.push_back(&r);

        const CallContext ctx{run, opt.seed};
        auto produce = [&](std::size_t i) -> ItemResult {
            const auto& record = *pending[i];
            try {
                auto request = build_messages(record, method);
                auto completion = client.generate(request, opt.params, ctx);
                return score_completion(record, completion, run, opt.tokenizer);
            } catch (const TransportExhausted&) {
                throw;
            } catch (const CapabilityViolation&) {
                throw;
            } catch (const std::exception& e) {
                ItemResult r;
                r.record_id = record.id;
                r.method = std::string(to_string(method.method));
                r.run_index = run;
                r.error = e.what();
                return r;
            }
        };
        auto commit = [&](ItemResult r) {
            writer.append(to_json(r));
            log.items.push_back(std::move(r));
        };
        runner_detail::ordered_parallel(pending.size(), opt.parallelism, produce, commit, opt.stop_after_items);
        logs.push_back(std::move(log));
    }
    return logs;
}

inline std::vector<RunLog> run_experiment(const std::vector<QuestionRecord>& records, Method method,
                                          ModelClient& client, const RunOptions& opt) {
    return run_experiment(records, method_spec(method), client, opt);
}

// ---------------------------------------------------------------------------
// Scoring

// Selects records for one table cell; unset fields match anything.
struct GroupFilter {
    std::optional<Category> category;
    std::optional<Order> order;
    std::optional<BeliefType> belief_type;
    std::optional<PersonalityFacet> facet;

    bool matches(const QuestionRecord& r) const {
        if (category && r.category != *category) return false;
        if (order && r.order != *order) return false;
        if (belief_type && r.belief_type != *belief_type) return false;
        if (facet) {
            auto it = r.personality.find(facet->factor);
            if (it == r.personality.end() || it->second != facet->level) return false;
        }
        return true;
    }

    static GroupFilter of(const SubsetKey& k) { return GroupFilter{k.category, k.order, k.belief_type, k.facet}; }

    bool is_all() const { return !category && !order && !belief_type && !facet; }

    // "Belief (1st, TB)", "2nd, FB", "1st [O=high]", or "ALL".
    std::string label() const {
        if (is_all()) return "ALL";
        std::string inner;
        if (order) inner = *order == Order::first ? "1st" : "2nd";
        if (belief_type && *belief_type != BeliefType::none) {
            if (!inner.empty()) inner += ", ";
            inner += *belief_type == BeliefType::true_belief ? "TB" : "FB";
        }
        std::string out;
        if (category) {
            out = std::string(to_string(*category));
            out[0] = static_cast<char>(out[0] - 'a' + 'A');
            if (!inner.empty()) out += " (" + inner + ")";
        } else {
            out = inner;
        }
        if (facet) {
            if (!out.empty()) out += " ";
            out += "[" + std::string(to_string(facet->factor)) + "=" + std::string(to_string(facet->level)) + "]";
        }
        return out;
    }

    auto operator<=>(const GroupFilter&) const = default;
};

struct SubsetStats {
    GroupFilter subset;
    std::size_t n = 0;
    // nullopt when n == 0.
    std::vector<std::optional<double>> per_run;
    std::optional<double> mean;
};

struct CategoryRow {
    std::array<SubsetStats, 5> cells;
    // Unweighted mean of the defined category cells.
    std::optional<double> avg;
};

struct ScoreReport {
    std::string dataset;
    std::string method;
    std::size_t runs = 0;
    std::vector<SubsetStats> primary;
    CategoryRow overall;
    CategoryRow first_order;
    CategoryRow second_true_belief;
    CategoryRow second_false_belief;
    // Keyed by (order, factor, level); pooled over categories.
    std::map<std::tuple<Order, Factor, Level>, SubsetStats> facets;
};

class Scorer {
public:
    Scorer(const std::vector<RunLog>& logs, const std::vector<QuestionRecord>& records) : logs_(logs) {
        if (logs.empty()) throw Error("no run logs to score");
        for (const auto& r : records) index_.emplace(r.id, &r);
        for (const auto& log : logs) {
            if (log.header.dataset != logs.front().header.dataset || log.header.method != logs.front().header.method)
                throw Error("run logs mix datasets or methods");
            for (const auto& item : log.items)
                if (!index_.count(item.record_id)) throw Error("unknown record_id " + item.record_id);
        }
    }

    SubsetStats group(const GroupFilter& f) const {
        SubsetStats s;
        s.subset = f;
        double sum = 0.0;
        std::size_t defined = 0;
        for (std::size_t run = 0; run < logs_.size(); ++run) {
            std::size_t n = 0, correct = 0;
            for (const auto& item : logs_[run].items) {
                if (!f.matches(*index_.at(item.record_id))) continue;
                ++n;
                if (item.correct) ++correct;
            }
            if (run == 0) s.n = n;
            if (n == 0) {
                s.per_run.push_back(std::nullopt);
                continue;
            }
            const double acc = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
            s.per_run.push_back(acc);
            sum += acc;
            ++defined;
        }
        if (defined) s.mean = sum / static_cast<double>(defined);
        return s;
    }

    CategoryRow row(GroupFilter base) const {
        CategoryRow row;
        double sum = 0.0;
        int defined = 0;
        for (std::size_t c = 0; c < kCategories.size(); ++c) {
            auto f = base;
            f.category = kCategories[c];
            row.cells[c] = group(f);
            if (row.cells[c].mean) {
                sum += *row.cells[c].mean;
                ++defined;
            }
        }
        if (defined) row.avg = sum / defined;
        return row;
    }

    ScoreReport report() const {
        ScoreReport rep;
        rep.dataset = logs_.front().header.dataset;
        rep.method = logs_.front().header.method;
        rep.runs = logs_.size();
        std::set<SubsetKey> keys;
        std::set<std::tuple<Order, Factor, Level>> facet_keys;
        for (const auto& item : logs_.front().items) {
            const auto& r = *index_.at(item.record_id);
            keys.insert(subset_key(r));
            for (const auto& [f, l] : r.personality) facet_keys.insert({r.order, f, l});
        }
        for (const auto& k : keys) rep.primary.push_back(group(GroupFilter::of(k)));
        rep.overall = row({});
        rep.first_order = row({std::nullopt, Order::first, std::nullopt, std::nullopt});
        rep.second_true_belief = row({std::nullopt, Order::second, BeliefType::true_belief, std::nullopt});
        rep.second_false_belief = row({std::nullopt, Order::second, BeliefType::false_belief, std::nullopt});
        for (const auto& [o, f, l] : facet_keys)
            rep.facets[{o, f, l}] = group({std::nullopt, o, std::nullopt, PersonalityFacet{f, l}});
        return rep;
    }

private:
    const std::vector<RunLog>& logs_;
    std::unordered_map<std::string, const QuestionRecord*> index_;
};

inline ScoreReport score(const std::vector<RunLog>& logs, const std::vector<QuestionRecord>& records) {
    return Scorer(logs, records).report();
}

} // namespace tomeval
