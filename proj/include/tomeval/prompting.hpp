#pragma once

// Chat message assembly for the evaluation methods. The templates below are frozen;
// golden files under goldens/ pin every byte.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tomeval/corpus.hpp"
#include "tomeval/error.hpp"

namespace tomeval {

enum class Method {
    vanilla,
    cot_prompting,
    soo_prompting,
    cot_prefixing,
    soo_prefixing,
    // Ablations: the SoO prefix without the character's name.
    soo_prefix_others,
    soo_prefix_shoes_of_others,
};

inline constexpr std::array<Method, 7> kAllMethods = {
    Method::vanilla,       Method::cot_prompting,     Method::soo_prompting,
    Method::cot_prefixing, Method::soo_prefixing,     Method::soo_prefix_others,
    Method::soo_prefix_shoes_of_others};

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::vanilla: return "vanilla";
    case Method::cot_prompting: return "cot_prompting";
    case Method::soo_prompting: return "soo_prompting";
    case Method::cot_prefixing: return "cot_prefixing";
    case Method::soo_prefixing: return "soo_prefixing";
    case Method::soo_prefix_others: return "soo_prefix_others";
    case Method::soo_prefix_shoes_of_others: return "soo_prefix_shoes_of_others";
    }
    return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
    for (auto m : kAllMethods)
        if (to_string(m) == s) return m;
    return std::nullopt;
}

// Display name used in report rows.
inline std::string_view display_name(Method m) {
    switch (m) {
    case Method::vanilla: return "Vanilla";
    case Method::cot_prompting: return "CoT Prompting";
    case Method::soo_prompting: return "SoO Prompting";
    case Method::cot_prefixing: return "CoT Prefixing";
    case Method::soo_prefixing: return "SoO Prefixing";
    case Method::soo_prefix_others: return "- name (others' shoes)";
    case Method::soo_prefix_shoes_of_others: return "- name (shoes of others)";
    }
    return "?";
}

inline constexpr std::string_view kSystemMessage =
    "You are an expert at understanding human communication. Please leverage the information "
    "provided and choose the most probable answer to the question from the options. Output your "
    "final answer by strictly following this format: [A], [B], [C], or [D]";

inline constexpr std::string_view kSooTemplate = "Let's put ourselves in {name}'s shoes.";
inline constexpr std::string_view kSooOthersTemplate = "Let's put ourselves in others' shoes.";
inline constexpr std::string_view kSooShoesOfOthersTemplate = "Let's put ourselves in shoes of others.";
inline constexpr std::string_view kCotPrefix = "Let's think step-by-step.";
// The space after the newline is intentional.
inline constexpr std::string_view kCotPromptSuffix = "# Answer\n Let's think step-by-step.";

inline constexpr std::string_view kNamePlaceholder = "{name}";

struct MethodSpec {
    Method method = Method::vanilla;
    std::optional<std::string> input_suffix;
    std::optional<std::string> output_prefix_template;

    bool is_prefixing() const { return output_prefix_template.has_value(); }
    bool is_prompting() const { return input_suffix.has_value(); }
    bool needs_name() const {
        auto has = [](const std::optional<std::string>& t) {
            return t && t->find(kNamePlaceholder) != std::string::npos;
        };
        return has(input_suffix) || has(output_prefix_template);
    }
};

inline MethodSpec method_spec(Method m) {
    MethodSpec s;
    s.method = m;
    switch (m) {
    case Method::vanilla: break;
    case Method::cot_prompting: s.input_suffix = std::string(kCotPromptSuffix); break;
    case Method::soo_prompting: s.input_suffix = std::string(kSooTemplate); break;
    case Method::cot_prefixing: s.output_prefix_template = std::string(kCotPrefix); break;
    case Method::soo_prefixing: s.output_prefix_template = std::string(kSooTemplate); break;
    case Method::soo_prefix_others: s.output_prefix_template = std::string(kSooOthersTemplate); break;
    case Method::soo_prefix_shoes_of_others:
        s.output_prefix_template = std::string(kSooShoesOfOthersTemplate);
        break;
    }
    return s;
}

inline bool is_prefixing(Method m) { return method_spec(m).is_prefixing(); }

inline std::string render_prefix(std::string_view tmpl, std::string_view name = {}) {
    const auto pos = tmpl.find(kNamePlaceholder);
    if (pos == std::string_view::npos) return std::string(tmpl);
    if (tmpl.find(kNamePlaceholder, pos + 1) != std::string_view::npos)
        throw Error("template contains more than one {name} placeholder: " + std::string(tmpl));
    if (name.empty()) throw MissingNameError("template requires a name: " + std::string(tmpl));
    std::string out;
    out.reserve(tmpl.size() + name.size());
    out.append(tmpl.substr(0, pos));
    out.append(name);
    out.append(tmpl.substr(pos + kNamePlaceholder.size()));
    return out;
}

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string system;
    std::string user;
    std::optional<std::string> assistant_prefix;
    std::string record_id;
    std::string method;

    // Wire form: a trailing assistant message carries the prefill.
    std::vector<ChatMessage> messages() const {
        std::vector<ChatMessage> out{{"system", system}, {"user", user}};
        if (assistant_prefix) out.push_back({"assistant", *assistant_prefix});
        return out;
    }

    bool operator==(const ChatRequest&) const = default;
};

inline nlohmann::json to_json(const ChatRequest& r) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : r.messages()) msgs.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json j;
    j["record_id"] = r.record_id;
    j["method"] = r.method;
    j["messages"] = msgs;
    return j;
}

inline std::string rstrip(std::string_view s) {
    auto end = s.find_last_not_of(" \t\r\n");
    return end == std::string_view::npos ? std::string() : std::string(s.substr(0, end + 1));
}

inline std::string render_options(const std::vector<std::string>& options) {
    std::string out;
    for (std::size_t i = 0; i < options.size(); ++i) {
        if (i) out += '\n';
        out += '[';
        out += static_cast<char>('A' + i);
        out += "] ";
        out += rstrip(options[i]);
    }
    return out;
}

inline std::string render_user_text(const QuestionRecord& r) {
    if (r.options.size() != kOptionCount)
        throw Error("record " + r.id + " has " + std::to_string(r.options.size()) + " options, expected 4");
    std::string out = r.benchmark == Benchmark::tomato ? "# Transcript\n" : "# Context\n";
    out += rstrip(r.context);
    out += "\n\n# Question\n";
    out += rstrip(r.question);
    out += "\n\n# Options\n";
    out += render_options(r.options);
    return out;
}

// name overrides the record's target name when given.
inline ChatRequest build_messages(const QuestionRecord& r, const MethodSpec& spec,
                                  std::optional<std::string> name = std::nullopt) {
    if (spec.needs_name() && !name) {
        auto resolved = resolve_target_name(r);
        if (!resolved)
            throw MissingNameError("no target name for record " + r.id + " (" +
                                   std::string(to_string(resolved.failure())) + ")");
        name = resolved.name();
    }
    const std::string_view n = name ? std::string_view(*name) : std::string_view();

    ChatRequest req;
    req.system = std::string(kSystemMessage);
    req.user = render_user_text(r);
    req.record_id = r.id;
    req.method = std::string(to_string(spec.method));
    if (spec.input_suffix) {
        req.user += "\n\n";
        req.user += render_prefix(*spec.input_suffix, n);
    }
    if (spec.output_prefix_template) req.assistant_prefix = render_prefix(*spec.output_prefix_template, n);
    return req;
}

inline ChatRequest build_messages(const QuestionRecord& r, Method m,
                                  std::optional<std::string> name = std::nullopt) {
    return build_messages(r, method_spec(m), std::move(name));
}

} // namespace tomeval
