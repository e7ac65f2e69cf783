#pragma once

// Question records for multiple-choice ToM benchmarks: loading, validation,
// filtering and subset labelling.

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tomeval/error.hpp"
#include "tomeval/name_extract.hpp"

namespace tomeval {

enum class Benchmark { tomato, tombench };
enum class ContextKind { conversation, narrative };
enum class Category { belief, intention, desire, emotion, knowledge };
enum class Order { first, second };
enum class BeliefType { true_belief, false_belief, none };
enum class Factor { O, C, E, A, N };
enum class Level { high, low };

inline constexpr std::array<Category, 5> kCategories = {
    Category::belief, Category::intention, Category::desire, Category::emotion,
    Category::knowledge};
inline constexpr std::array<Factor, 5> kFactors = {Factor::O, Factor::C, Factor::E,
                                                   Factor::A, Factor::N};
inline constexpr std::size_t kOptionCount = 4;

namespace detail {

template <typename E, std::size_t N>
using NameTable = std::array<std::pair<E, std::string_view>, N>;

inline constexpr NameTable<Benchmark, 2> kBenchmarkNames{
    {{Benchmark::tomato, "tomato"}, {Benchmark::tombench, "tombench"}}};
inline constexpr NameTable<ContextKind, 2> kContextKindNames{
    {{ContextKind::conversation, "conversation"}, {ContextKind::narrative, "narrative"}}};
inline constexpr NameTable<Category, 5> kCategoryNames{{{Category::belief, "belief"},
                                                        {Category::intention, "intention"},
                                                        {Category::desire, "desire"},
                                                        {Category::emotion, "emotion"},
                                                        {Category::knowledge, "knowledge"}}};
inline constexpr NameTable<Order, 2> kOrderNames{{{Order::first, "first"}, {Order::second, "second"}}};
inline constexpr NameTable<BeliefType, 3> kBeliefNames{{{BeliefType::true_belief, "true_belief"},
                                                        {BeliefType::false_belief, "false_belief"},
                                                        {BeliefType::none, "none"}}};
inline constexpr NameTable<Factor, 5> kFactorNames{
    {{Factor::O, "O"}, {Factor::C, "C"}, {Factor::E, "E"}, {Factor::A, "A"}, {Factor::N, "N"}}};
inline constexpr NameTable<Level, 2> kLevelNames{{{Level::high, "high"}, {Level::low, "low"}}};

template <typename E, std::size_t N>
std::string_view name_of(const NameTable<E, N>& table, E value) {
    for (const auto& [e, name] : table)
        if (e == value) return name;
    return "?";
}

template <typename E, std::size_t N>
std::optional<E> parse_name(const NameTable<E, N>& table, std::string_view text) {
    for (const auto& [e, name] : table)
        if (name == text) return e;
    return std::nullopt;
}

} // namespace detail

inline std::string_view to_string(Benchmark v) { return detail::name_of(detail::kBenchmarkNames, v); }
inline std::string_view to_string(ContextKind v) { return detail::name_of(detail::kContextKindNames, v); }
inline std::string_view to_string(Category v) { return detail::name_of(detail::kCategoryNames, v); }
inline std::string_view to_string(Order v) { return detail::name_of(detail::kOrderNames, v); }
inline std::string_view to_string(BeliefType v) { return detail::name_of(detail::kBeliefNames, v); }
inline std::string_view to_string(Factor v) { return detail::name_of(detail::kFactorNames, v); }
inline std::string_view to_string(Level v) { return detail::name_of(detail::kLevelNames, v); }

inline std::optional<Benchmark> parse_benchmark(std::string_view s) { return detail::parse_name(detail::kBenchmarkNames, s); }
inline std::optional<Category> parse_category(std::string_view s) { return detail::parse_name(detail::kCategoryNames, s); }
inline std::optional<Order> parse_order(std::string_view s) { return detail::parse_name(detail::kOrderNames, s); }
inline std::optional<BeliefType> parse_belief_type(std::string_view s) { return detail::parse_name(detail::kBeliefNames, s); }

struct QuestionRecord {
    std::string id;
    Benchmark benchmark = Benchmark::tomato;
    ContextKind context_kind = ContextKind::conversation;
    std::string context;
    std::string question;
    std::vector<std::string> options;
    int answer_index = 0;
    Category category = Category::belief;
    Order order = Order::first;
    BeliefType belief_type = BeliefType::none;
    std::map<Factor, Level> personality;
    std::optional<std::string> target_name;
    std::string language = "en";

    char gold_letter() const { return static_cast<char>('A' + answer_index); }

    bool operator==(const QuestionRecord&) const = default;
};

struct PersonalityFacet {
    Factor factor;
    Level level;

    auto operator<=>(const PersonalityFacet&) const = default;
};

struct SubsetKey {
    Category category = Category::belief;
    Order order = Order::first;
    BeliefType belief_type = BeliefType::none;
    std::optional<PersonalityFacet> facet;

    auto operator<=>(const SubsetKey&) const = default;

    // Display label in the style "Belief (1st)", "Emotion (2nd, FB)", "Belief (1st, TB)".
    std::string label() const {
        std::string out(to_string(category));
        out[0] = static_cast<char>(out[0] - 'a' + 'A');
        out += order == Order::first ? " (1st" : " (2nd";
        if (belief_type == BeliefType::true_belief) out += ", TB";
        if (belief_type == BeliefType::false_belief) out += ", FB";
        out += ")";
        if (facet) {
            out += " [";
            out += to_string(facet->factor);
            out += "=";
            out += to_string(facet->level);
            out += "]";
        }
        return out;
    }
};

// Primary key; every record maps to exactly one.
inline SubsetKey subset_key(const QuestionRecord& r) {
    return SubsetKey{r.category, r.order, r.belief_type, std::nullopt};
}

// Overlapping secondary keys, one per labelled personality factor.
inline std::vector<SubsetKey> personality_facets(const QuestionRecord& r) {
    std::vector<SubsetKey> keys;
    for (const auto& [factor, level] : r.personality)
        keys.push_back(SubsetKey{r.category, r.order, r.belief_type, PersonalityFacet{factor, level}});
    return keys;
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const QuestionRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["benchmark"] = to_string(r.benchmark);
    j["context_kind"] = to_string(r.context_kind);
    j["context"] = r.context;
    j["question"] = r.question;
    j["options"] = r.options;
    j["answer_index"] = r.answer_index;
    j["category"] = to_string(r.category);
    j["order"] = to_string(r.order);
    j["belief_type"] = to_string(r.belief_type);
    if (!r.personality.empty()) {
        nlohmann::json p = nlohmann::json::object();
        for (const auto& [f, l] : r.personality) p[std::string(to_string(f))] = to_string(l);
        j["personality"] = p;
    }
    if (r.target_name) j["target_name"] = *r.target_name;
    j["language"] = r.language;
    return j;
}

enum class LoadMode {
    // Accept option counts other than four so filter_records can exclude them.
    lenient,
    // Reject any record that is not a valid four-option record.
    strict,
};

namespace detail {

inline const nlohmann::json& required(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw std::invalid_argument(std::string("missing field '") + key + "'");
    return *it;
}

inline std::string required_string(const nlohmann::json& j, const char* key) {
    const auto& v = required(j, key);
    if (!v.is_string()) throw std::invalid_argument(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

template <typename E, std::size_t N>
E required_enum(const nlohmann::json& j, const char* key, const NameTable<E, N>& table) {
    auto text = required_string(j, key);
    auto v = parse_name(table, text);
    if (!v) throw std::invalid_argument(std::string("field '") + key + "' has unknown value '" + text + "'");
    return *v;
}

} // namespace detail

// Parses one record and checks invariants. Throws std::invalid_argument on violation.
inline QuestionRecord record_from_json(const nlohmann::json& j, Benchmark expected,
                                       LoadMode mode = LoadMode::lenient) {
    using namespace detail;
    if (!j.is_object()) throw std::invalid_argument("record is not an object");
    QuestionRecord r;
    r.id = required_string(j, "id");
    if (r.id.empty()) throw std::invalid_argument("empty id");
    r.benchmark = j.contains("benchmark") ? required_enum(j, "benchmark", kBenchmarkNames) : expected;
    if (r.benchmark != expected)
        throw std::invalid_argument("benchmark '" + std::string(to_string(r.benchmark)) +
                                    "' does not match expected '" + std::string(to_string(expected)) + "'");
    r.context_kind = j.contains("context_kind")
                         ? required_enum(j, "context_kind", kContextKindNames)
                         : (r.benchmark == Benchmark::tomato ? ContextKind::conversation : ContextKind::narrative);
    r.context = required_string(j, "context");
    r.question = required_string(j, "question");

    const auto& opts = required(j, "options");
    if (!opts.is_array()) throw std::invalid_argument("field 'options' must be an array");
    for (const auto& o : opts) {
        if (!o.is_string()) throw std::invalid_argument("option is not a string");
        r.options.push_back(o.get<std::string>());
    }
    if (mode == LoadMode::strict && r.options.size() != kOptionCount)
        throw std::invalid_argument("wrong option count " + std::to_string(r.options.size()) + ", expected 4");
    if (r.options.size() < 2) throw std::invalid_argument("fewer than two options");

    const auto& ans = required(j, "answer_index");
    if (!ans.is_number_integer()) throw std::invalid_argument("field 'answer_index' must be an integer");
    r.answer_index = ans.get<int>();
    if (r.answer_index < 0 || r.answer_index > 3 ||
        static_cast<std::size_t>(r.answer_index) >= r.options.size())
        throw std::invalid_argument("answer_index " + std::to_string(r.answer_index) + " out of range");

    r.category = required_enum(j, "category", kCategoryNames);
    r.order = required_enum(j, "order", kOrderNames);
    r.belief_type = j.contains("belief_type") ? required_enum(j, "belief_type", kBeliefNames) : BeliefType::none;
    if (r.benchmark == Benchmark::tomato && r.order == Order::first && r.belief_type != BeliefType::none)
        throw std::invalid_argument("first-order tomato records cannot carry a belief_type");

    if (auto it = j.find("personality"); it != j.end() && !it->is_null()) {
        if (r.benchmark != Benchmark::tomato)
            throw std::invalid_argument("personality is only defined for tomato records");
        if (!it->is_object()) throw std::invalid_argument("field 'personality' must be an object");
        for (const auto& [k, v] : it->items()) {
            auto f = parse_name(kFactorNames, k);
            if (!f) throw std::invalid_argument("unknown personality factor '" + k + "'");
            if (!v.is_string()) throw std::invalid_argument("personality level must be a string");
            auto l = parse_name(kLevelNames, v.get<std::string>());
            if (!l) throw std::invalid_argument("unknown personality level '" + v.get<std::string>() + "'");
            r.personality[*f] = *l;
        }
    }
    if (auto it = j.find("target_name"); it != j.end() && !it->is_null()) {
        if (!it->is_string() || it->get<std::string>().empty())
            throw std::invalid_argument("target_name must be a non-empty string");
        r.target_name = it->get<std::string>();
    }
    if (auto it = j.find("language"); it != j.end() && !it->is_null()) r.language = it->get<std::string>();
    return r;
}

inline std::vector<QuestionRecord> load_dataset(const std::string& path, Benchmark benchmark,
                                                LoadMode mode = LoadMode::lenient) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError(path, 0, "cannot open dataset file");
    std::vector<QuestionRecord> records;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DatasetError(path, lineno, std::string("malformed line: ") + e.what());
        }
        try {
            auto r = record_from_json(j, benchmark, mode);
            if (auto [it, inserted] = seen.emplace(r.id, lineno); !inserted)
                throw std::invalid_argument("duplicate id '" + r.id + "' (first seen on line " +
                                            std::to_string(it->second) + ")");
            records.push_back(std::move(r));
        } catch (const std::invalid_argument& e) {
            throw DatasetError(path, lineno, e.what());
        } catch (const nlohmann::json::exception& e) {
            throw DatasetError(path, lineno, e.what());
        }
    }
    return records;
}

inline void save_dataset(const std::string& path, const std::vector<QuestionRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

// Precomputed target_name when present, otherwise rule-based extraction.
inline ExtractionResult resolve_target_name(const QuestionRecord& r) {
    if (r.target_name) return ExtractionResult::success(*r.target_name);
    return extract_target_name(r.question);
}

enum class ExclusionReason { wrong_option_count, name_extraction_failed, non_english };

inline std::string_view to_string(ExclusionReason r) {
    switch (r) {
    case ExclusionReason::wrong_option_count: return "wrong_option_count";
    case ExclusionReason::name_extraction_failed: return "name_extraction_failed";
    case ExclusionReason::non_english: return "non_english";
    }
    return "?";
}

struct FilterPolicy {
    bool require_name = false;
    std::string language = "en";
};

struct Exclusion {
    QuestionRecord record;
    ExclusionReason reason;
    std::string detail;
};

struct FilterResult {
    std::vector<QuestionRecord> kept;
    std::vector<Exclusion> excluded;
};

// Never fails; kept and excluded partition the input, order preserved.
inline FilterResult filter_records(const std::vector<QuestionRecord>& records, const FilterPolicy& policy) {
    FilterResult out;
    for (const auto& r : records) {
        if (r.options.size() != kOptionCount) {
            out.excluded.push_back({r, ExclusionReason::wrong_option_count,
                                    std::to_string(r.options.size()) + " options"});
            continue;
        }
        if (!policy.language.empty() && r.language != policy.language) {
            out.excluded.push_back({r, ExclusionReason::non_english, r.language});
            continue;
        }
        if (policy.require_name) {
            auto name = resolve_target_name(r);
            if (!name) {
                out.excluded.push_back(
                    {r, ExclusionReason::name_extraction_failed, std::string(to_string(name.failure()))});
                continue;
            }
        }
        out.kept.push_back(r);
    }
    return out;
}

} // namespace tomeval
