#pragma once

// Pairwise faithfulness judging of two methods' thoughts with randomized positions.

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "tomeval/corpus.hpp"
#include "tomeval/jsonl_log.hpp"
#include "tomeval/model_client.hpp"
#include "tomeval/prompting.hpp"
#include "tomeval/rng.hpp"
#include "tomeval/runner.hpp"

namespace tomeval {

inline constexpr std::string_view kJudgeSystemMessage =
    "Please act as an impartial judge and evaluate the quality of the responses provided by two AI "
    "assistants to the context, user question, and options displayed below. Your evaluation should "
    "consider the truthfulness of the responses. You will be given assistant X’s answer, and "
    "assistant Y’s answer. Your job is to evaluate which assistant’s answer is more faithful. "
    "You should independently solve the user question step-by-step first. Then compare both "
    "assistants’ answers with your answer. Identify and correct any mistakes. Avoid any position "
    "biases and ensure that the order in which the responses were presented does not influence your "
    "decision. Do not allow the length of the responses to influence your evaluation. Do not favor "
    "certain names of the assistants. Be as objective as possible. After providing your explanation, "
    "output your final verdict by strictly following this format: \"[[X]]\" if assistant X is better, "
    "\"[[Y]]\" if assistant Y is better, and \"[[Z]]\" for a tie.";

enum class Verdict { X, Y, Z, invalid };
enum class Assignment { method_a_is_X, method_a_is_Y };
enum class Outcome { win, tie, lose, invalid };

inline std::string_view to_string(Verdict v) {
    switch (v) {
    case Verdict::X: return "X";
    case Verdict::Y: return "Y";
    case Verdict::Z: return "Z";
    case Verdict::invalid: return "invalid";
    }
    return "?";
}

inline std::string_view to_string(Assignment a) {
    return a == Assignment::method_a_is_X ? "method_a_is_X" : "method_a_is_Y";
}

inline std::string_view to_string(Outcome o) {
    switch (o) {
    case Outcome::win: return "win";
    case Outcome::tie: return "tie";
    case Outcome::lose: return "lose";
    case Outcome::invalid: return "invalid";
    }
    return "?";
}

// Ids where both methods answered correctly in the given run. Order follows logs_a.
inline std::vector<std::string> select_comparable(const std::vector<RunLog>& logs_a, const std::vector<RunLog>& logs_b,
                                                  std::uint32_t run_index = 0) {
    auto pick = [&](const std::vector<RunLog>& logs, const char* side) -> const RunLog& {
        for (const auto& l : logs)
            if (l.header.run_index == run_index) return l;
        throw Error(std::string("no run ") + std::to_string(run_index) + " among logs for method " + side);
    };
    const RunLog& a = pick(logs_a, "a");
    const RunLog& b = pick(logs_b, "b");
    if (a.header.dataset != b.header.dataset)
        throw Error("cannot compare logs over different datasets: " + a.header.dataset + " vs " + b.header.dataset);

    std::set<std::string> ids_b;
    std::set<std::string> correct_b;
    for (const auto& item : b.items) {
        ids_b.insert(item.record_id);
        if (item.correct) correct_b.insert(item.record_id);
    }
    bool shared = a.items.empty() || b.items.empty();
    std::vector<std::string> out;
    for (const auto& item : a.items) {
        if (ids_b.count(item.record_id)) shared = true;
        if (item.correct && correct_b.count(item.record_id)) out.push_back(item.record_id);
    }
    if (!shared) throw Error("logs for " + a.header.method + " and " + b.header.method + " share no records");
    return out;
}

inline ChatRequest build_judge_messages(const QuestionRecord& r, std::string_view answer_x, std::string_view answer_y) {
    ChatRequest req;
    req.system = std::string(kJudgeSystemMessage);
    std::string user = "[Context]\n";
    user += rstrip(r.context);
    user += "\n\n[User Question]\n";
    user += rstrip(r.question);
    user += "\n\n[Options]\n";
    user += render_options(r.options);
    user += "\n\n[The Start of Assistant X’s Answer]\n";
    user += answer_x;
    user += "\n[The End of Assistant X’s Answer]\n\n[The Start of Assistant Y’s Answer]\n";
    user += answer_y;
    user += "\n[The End of Assistant Y’s Answer]";
    req.user = rstrip(user);
    req.record_id = r.id;
    req.method = "judge";
    return req;
}

// Last of "[[X]]", "[[Y]]", "[[Z]]" in the text.
inline Verdict parse_verdict(std::string_view text) {
    for (std::size_t i = text.size(); i >= 5; --i) {
        const std::size_t at = i - 5;
        if (text.compare(at, 2, "[[") != 0 || text.compare(at + 3, 2, "]]") != 0) continue;
        switch (text[at + 2]) {
        case 'X': return Verdict::X;
        case 'Y': return Verdict::Y;
        case 'Z': return Verdict::Z;
        default: break;
        }
    }
    return Verdict::invalid;
}

inline Assignment draw_assignment(std::uint64_t seed, std::string_view record_id) {
    StreamRng rng(stream_seed(seed, record_id, 0, "judge"));
    return rng.coin() ? Assignment::method_a_is_Y : Assignment::method_a_is_X;
}

inline Outcome outcome_for_a(Assignment a, Verdict v) {
    switch (v) {
    case Verdict::Z: return Outcome::tie;
    case Verdict::invalid: return Outcome::invalid;
    case Verdict::X: return a == Assignment::method_a_is_X ? Outcome::win : Outcome::lose;
    case Verdict::Y: return a == Assignment::method_a_is_Y ? Outcome::win : Outcome::lose;
    }
    return Outcome::invalid;
}

struct JudgeItem {
    std::string record_id;
    std::string answer_x;
    std::string answer_y;
    Assignment assignment = Assignment::method_a_is_X;
    Verdict verdict = Verdict::invalid;
    std::string judge_text;
    std::optional<std::string> error;

    Outcome outcome() const { return outcome_for_a(assignment, verdict); }
};

inline nlohmann::json to_json(const JudgeItem& i) {
    nlohmann::json j;
    j["record_id"] = i.record_id;
    j["assignment"] = to_string(i.assignment);
    j["answer_x"] = i.answer_x;
    j["answer_y"] = i.answer_y;
    j["verdict"] = to_string(i.verdict);
    j["outcome"] = to_string(i.outcome());
    j["judge_text"] = i.judge_text;
    if (i.error) j["error"] = *i.error;
    return j;
}

inline JudgeItem judge_item_from_json(const nlohmann::json& j) {
    JudgeItem i;
    i.record_id = j.at("record_id").get<std::string>();
    i.assignment = j.at("assignment").get<std::string>() == "method_a_is_Y" ? Assignment::method_a_is_Y
                                                                            : Assignment::method_a_is_X;
    i.answer_x = j.at("answer_x").get<std::string>();
    i.answer_y = j.at("answer_y").get<std::string>();
    const auto v = j.at("verdict").get<std::string>();
    i.verdict = v == "X" ? Verdict::X : v == "Y" ? Verdict::Y : v == "Z" ? Verdict::Z : Verdict::invalid;
    i.judge_text = j.value("judge_text", "");
    if (j.contains("error")) i.error = j["error"].get<std::string>();
    return i;
}

struct PairwiseStats {
    GroupFilter subset;
    std::size_t n = 0;
    std::size_t wins = 0;
    std::size_t ties = 0;
    std::size_t losses = 0;
    std::size_t invalid = 0;

    // Percentages over non-invalid verdicts; undefined when n == 0.
    std::optional<double> win_pct() const { return pct(wins); }
    std::optional<double> tie_pct() const { return pct(ties); }
    std::optional<double> lose_pct() const { return pct(losses); }

private:
    std::optional<double> pct(std::size_t k) const {
        if (n == 0) return std::nullopt;
        return 100.0 * static_cast<double>(k) / static_cast<double>(n);
    }
};

inline PairwiseStats tally(const std::vector<JudgeItem>& items, const GroupFilter& f,
                           const std::unordered_map<std::string, const QuestionRecord*>& index) {
    PairwiseStats s;
    s.subset = f;
    for (const auto& item : items) {
        auto it = index.find(item.record_id);
        if (it == index.end()) throw Error("unknown record_id " + item.record_id);
        if (!f.matches(*it->second)) continue;
        switch (item.outcome()) {
        case Outcome::win: ++s.wins; break;
        case Outcome::tie: ++s.ties; break;
        case Outcome::lose: ++s.losses; break;
        case Outcome::invalid: ++s.invalid; continue;
        }
        ++s.n;
    }
    return s;
}

// One row per primary subset present among the items, one per personality facet
// (pooled over categories and split by order), then ALL.
inline std::vector<PairwiseStats> aggregate(const std::vector<JudgeItem>& items,
                                            const std::vector<QuestionRecord>& records) {
    std::unordered_map<std::string, const QuestionRecord*> index;
    for (const auto& r : records) index.emplace(r.id, &r);
    std::set<SubsetKey> keys;
    std::set<GroupFilter> facet_filters;
    for (const auto& item : items) {
        auto it = index.find(item.record_id);
        if (it == index.end()) throw Error("unknown record_id " + item.record_id);
        keys.insert(subset_key(*it->second));
        for (const auto& [f, l] : it->second->personality)
            facet_filters.insert(GroupFilter{std::nullopt, it->second->order, std::nullopt, PersonalityFacet{f, l}});
    }
    std::vector<PairwiseStats> out;
    for (const auto& k : keys) out.push_back(tally(items, GroupFilter::of(k), index));
    for (const auto& f : facet_filters) out.push_back(tally(items, f, index));
    out.push_back(tally(items, GroupFilter{}, index));
    return out;
}

struct JudgeOptions {
    std::uint64_t seed = 0;
    std::uint32_t run_index = 0;
    GenParams params;
    int parallelism = 1;
    // Written when set; an existing log with the same header is resumed.
    std::optional<std::filesystem::path> log_path;
    std::string judge_id = "judge";
    std::function<std::string()> clock = utc_timestamp;
};

struct JudgeResult {
    std::string method_a;
    std::string method_b;
    std::vector<JudgeItem> items;
    std::vector<PairwiseStats> stats;
};

inline std::string judge_log_file_name(const std::string& dataset, const std::string& a, const std::string& b,
                                       const std::string& judge, std::uint32_t run_index, std::uint64_t seed) {
    return "judge__" + sanitize_component(dataset) + "__" + sanitize_component(a) + "__vs__" +
           sanitize_component(b) + "__" + sanitize_component(judge) + "__run" + std::to_string(run_index) +
           "__seed" + std::to_string(seed) + ".jsonl";
}

// Judges method a against method b on records both answered correctly. Judge call
// failures are logged as invalid verdicts.
inline JudgeResult compare_methods(const std::vector<RunLog>& logs_a, const std::vector<RunLog>& logs_b,
                                   const std::vector<QuestionRecord>& records, ModelClient& judge,
                                   const JudgeOptions& opt) {
    JudgeResult result;
    const auto ids = select_comparable(logs_a, logs_b, opt.run_index);
    auto thoughts = [&](const std::vector<RunLog>& logs) {
        std::unordered_map<std::string, std::string> m;
        for (const auto& l : logs)
            if (l.header.run_index == opt.run_index)
                for (const auto& item : l.items) m.emplace(item.record_id, item.thought);
        return m;
    };
    const auto ta = thoughts(logs_a);
    const auto tb = thoughts(logs_b);
    result.method_a = logs_a.front().header.method;
    result.method_b = logs_b.front().header.method;

    std::unordered_map<std::string, const QuestionRecord*> index;
    for (const auto& r : records) index.emplace(r.id, &r);

    std::optional<JsonlLogWriter> writer;
    std::set<std::string> done;
    if (opt.log_path) {
        nlohmann::json header;
        header["dataset"] = logs_a.front().header.dataset;
        header["method_a"] = result.method_a;
        header["method_b"] = result.method_b;
        header["judge"] = opt.judge_id;
        header["params"] = to_json(opt.params);
        header["seed"] = opt.seed;
        header["run_index"] = opt.run_index;
        header["created_at"] = opt.clock ? opt.clock() : std::string();
        std::vector<nlohmann::json> existing;
        writer.emplace(*opt.log_path, header, &existing);
        for (const auto& j : existing) {
            result.items.push_back(judge_item_from_json(j));
            done.insert(result.items.back().record_id);
        }
    }

    std::vector<std::string> pending;
    for (const auto& id : ids)
        if (!done.count(id)) pending.push_back(id);

    auto produce = [&](std::size_t i) -> JudgeItem {
        const auto& id = pending[i];
        auto rec = index.find(id);
        if (rec == index.end()) throw Error("unknown record_id " + id);
        JudgeItem item;
        item.record_id = id;
        item.assignment = draw_assignment(opt.seed, id);
        const auto& a = ta.at(id);
        const auto& b = tb.at(id);
        item.answer_x = item.assignment == Assignment::method_a_is_X ? a : b;
        item.answer_y = item.assignment == Assignment::method_a_is_X ? b : a;
        try {
            auto request = build_judge_messages(*rec->second, item.answer_x, item.answer_y);
            auto c = judge.generate(request, opt.params, CallContext{opt.run_index, opt.seed});
            item.judge_text = c.raw_text;
            item.verdict = parse_verdict(c.raw_text);
        } catch (const std::exception& e) {
            item.error = e.what();
            item.verdict = Verdict::invalid;
        }
        return item;
    };
    auto commit = [&](JudgeItem item) {
        if (writer) writer->append(to_json(item));
        result.items.push_back(std::move(item));
    };
    runner_detail::ordered_parallel(pending.size(), opt.parallelism, produce, commit, std::nullopt);

    result.stats = aggregate(result.items, records);
    return result;
}

} // namespace tomeval
