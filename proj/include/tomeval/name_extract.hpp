#pragma once

// Rule-based extraction of the character whose mental state a question asks about.
//
// The question is tokenized, maximal runs of capitalized non-function words are merged
// into name units, and a fixed set of frames is matched in priority order:
//
//   0. auxiliary + subject + mental verb   "how does he think that Liam feels"
//   1. auxiliary + subject                  "what does Sara do", "why is Noah upset"
//   2. possessive + mental noun             "what is Ben's true intention"
//   3. subject + inflected mental verb      "Olivia believes what"
//
// Within a tier the leftmost match wins, which selects the outermost predicate of a
// nested question. Pronoun subjects resolve to the nearest preceding name, preferring
// names outside quoted speech. If no frame applies, a lone name is returned.

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tomeval {

enum class ExtractionFailure { no_candidate, ambiguous };

inline std::string_view to_string(ExtractionFailure f) {
    return f == ExtractionFailure::no_candidate ? "no_candidate" : "ambiguous";
}

class ExtractionResult {
public:
    static ExtractionResult success(std::string name) {
        ExtractionResult r;
        r.name_ = std::move(name);
        return r;
    }
    static ExtractionResult failure(ExtractionFailure f) {
        ExtractionResult r;
        r.failure_ = f;
        return r;
    }

    bool ok() const { return name_.has_value(); }
    explicit operator bool() const { return ok(); }
    const std::string& name() const { return *name_; }
    ExtractionFailure failure() const { return failure_; }

    bool operator==(const ExtractionResult&) const = default;

private:
    std::optional<std::string> name_;
    ExtractionFailure failure_ = ExtractionFailure::no_candidate;
};

// Lexicon version 1. Order is part of the contract.
inline const std::vector<std::string>& mental_verb_lexicon() {
    static const std::vector<std::string> lexicon = {
        "think", "believe", "feel", "want", "desire", "intend",
        "know",  "expect",  "hope", "plan", "do",     "say"};
    return lexicon;
}

namespace name_detail {

struct VerbForms {
    std::string_view lemma;
    std::array<std::string_view, 5> forms;
};

inline constexpr std::array<VerbForms, 12> kVerbForms{{
    {"think", {"think", "thinks", "thought", "thinking", ""}},
    {"believe", {"believe", "believes", "believed", "believing", ""}},
    {"feel", {"feel", "feels", "felt", "feeling", ""}},
    {"want", {"want", "wants", "wanted", "wanting", ""}},
    {"desire", {"desire", "desires", "desired", "desiring", ""}},
    {"intend", {"intend", "intends", "intended", "intending", ""}},
    {"know", {"know", "knows", "knew", "known", "knowing"}},
    {"expect", {"expect", "expects", "expected", "expecting", ""}},
    {"hope", {"hope", "hopes", "hoped", "hoping", ""}},
    {"plan", {"plan", "plans", "planned", "planning", ""}},
    {"do", {"do", "does", "did", "doing", "done"}},
    {"say", {"say", "says", "said", "saying", ""}},
}};

inline bool is_mental_verb(std::string_view w) {
    for (const auto& v : kVerbForms)
        for (auto f : v.forms)
            if (!f.empty() && f == w) return true;
    return false;
}

// Bare lemma forms read as plural agreement after a subject ("they think"); the
// declarative frame only accepts inflected forms.
inline bool is_inflected_mental_verb(std::string_view w) {
    for (const auto& v : kVerbForms)
        if (w == v.lemma) return false;
    return is_mental_verb(w);
}

inline const std::set<std::string, std::less<>>& auxiliaries() {
    static const std::set<std::string, std::less<>> s = {
        "does", "do",    "did",   "will",   "would", "is",  "was",  "are",
        "were", "can",   "could", "should", "might", "may", "must", "has",
        "have", "had",   "shall"};
    return s;
}

inline const std::set<std::string, std::less<>>& gap_words() {
    static const std::set<std::string, std::less<>> s = {
        "really", "most",      "likely",  "probably", "actually", "still", "not",
        "truly",  "to",        "be",      "going",    "currently", "now",  "initially",
        "secretly", "genuinely", "first", "mostly",   "also",     "just"};
    return s;
}

inline const std::set<std::string, std::less<>>& mental_nouns() {
    static const std::set<std::string, std::less<>> s = {
        "feeling",   "feelings",  "emotion",     "emotions",     "intention", "intentions",
        "belief",    "beliefs",   "thought",     "thoughts",     "desire",    "desires",
        "attitude",  "mood",      "reaction",    "opinion",      "opinions",  "purpose",
        "motivation", "motive",   "goal",        "goals",        "knowledge", "view",
        "views",     "perspective", "plan",      "plans",        "wish",      "wishes",
        "expectation", "expectations", "hope",   "hopes",        "impression", "state",
        "understanding", "assumption", "guess",  "interpretation"};
    return s;
}

// Capitalized words that never start a name.
inline const std::set<std::string, std::less<>>& function_words() {
    static const std::set<std::string, std::less<>> s = {
        "What", "When", "Where", "Why", "Who", "Whom", "Whose", "Which", "How",
        "Does", "Do", "Did", "Is", "Are", "Was", "Were", "Will", "Would", "Can",
        "Could", "Should", "Shall", "May", "Might", "Must", "Has", "Have", "Had",
        "The", "A", "An", "In", "On", "At", "After", "Before", "During", "While",
        "If", "According", "Based", "Given", "Considering", "From", "To", "For",
        "Of", "And", "But", "Or", "So", "Then", "As", "Since", "Because", "Although",
        "Yeah", "Yes", "No", "Not", "Oh", "Okay", "OK", "Ok", "Well", "Hi", "Hello",
        "Hey", "Please", "Let", "Let's", "This", "That", "These", "Those", "It",
        "It's", "He", "She", "They", "We", "You", "I", "I'm", "I've", "I'll", "I'd",
        "His", "Her", "Their", "Our", "My", "Your", "Its", "There", "Here", "Now",
        "Today", "Tomorrow", "Yesterday", "Alright", "Sure", "Thanks", "Thank",
        "Come", "Man", "Ha", "Aww", "Wow", "Just", "Also", "Option", "Options",
        "Question", "Answer", "Context", "Transcript", "Both", "All", "Each",
        "Everyone", "Someone", "Nobody", "Everybody", "Somebody", "Other", "Others"};
    return s;
}

inline const std::set<std::string, std::less<>>& honorifics() {
    static const std::set<std::string, std::less<>> s = {"Mr", "Mrs", "Ms", "Dr", "Prof", "Miss", "Mx"};
    return s;
}

enum class UnitKind { name, pronoun, word, punct };

struct Unit {
    UnitKind kind = UnitKind::word;
    std::string lower;           // lowercase text (words, pronouns)
    std::size_t begin = 0;       // byte span of the name in the question
    std::size_t end = 0;
    bool possessive = false;
    bool in_quote = false;
    bool plural = false;         // pronouns: they/we/you
};

struct RawToken {
    std::size_t begin;
    std::size_t end;
    bool word;
};

inline bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// U+2000..U+206F (curly quotes, dashes, ellipsis) encode as E2 80 xx / E2 81 xx.
inline bool general_punct_at(std::string_view s, std::size_t i) {
    return i + 2 < s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
           (static_cast<unsigned char>(s[i + 1]) == 0x80 || static_cast<unsigned char>(s[i + 1]) == 0x81);
}

// Right single quotation mark, used as an apostrophe.
inline bool curly_apostrophe_at(std::string_view s, std::size_t i) { return s.substr(i, 3) == "\xE2\x80\x99"; }

inline bool curly_quote_at(std::string_view s, std::size_t i, bool& opening) {
    if (s.substr(i, 3) == "\xE2\x80\x9C") { opening = true; return true; }
    if (s.substr(i, 3) == "\xE2\x80\x9D") { opening = false; return true; }
    return false;
}

inline std::vector<RawToken> raw_tokens(std::string_view s) {
    std::vector<RawToken> out;
    std::size_t i = 0;
    while (i < s.size()) {
        unsigned char c = s[i];
        if (std::isspace(c)) { ++i; continue; }
        if (general_punct_at(s, i)) {
            out.push_back({i, i + 3, false});
            i += 3;
            continue;
        }
        if (!is_word_byte(c)) {
            out.push_back({i, i + 1, false});
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < s.size()) {
            if (curly_apostrophe_at(s, j)) {
                if (j + 3 < s.size() && is_word_byte(s[j + 3]) && !general_punct_at(s, j + 3)) { j += 3; continue; }
                break;
            }
            if (general_punct_at(s, j)) break;
            unsigned char d = s[j];
            if (is_word_byte(d)) { ++j; continue; }
            if ((d == '\'' || d == '-') && j + 1 < s.size() && is_word_byte(s[j + 1]) && !general_punct_at(s, j + 1)) {
                ++j;
                continue;
            }
            break;
        }
        out.push_back({i, j, true});
        i = j;
    }
    return out;
}

inline std::string lowercase(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

// Length of a trailing possessive suffix ('s, ’s, s') or 0.
inline std::size_t possessive_suffix(std::string_view w) {
    if (w.size() > 2 && w.substr(w.size() - 2) == "'s") return 2;
    if (w.size() > 4 && w.substr(w.size() - 4) == "\xE2\x80\x99s") return 4;
    return 0;
}

inline bool starts_upper(std::string_view w) { return !w.empty() && std::isupper(static_cast<unsigned char>(w[0])); }

inline std::vector<Unit> units(std::string_view q) {
    const auto toks = raw_tokens(q);
    std::vector<Unit> out;
    bool in_quote = false;
    for (std::size_t t = 0; t < toks.size(); ++t) {
        const auto& tok = toks[t];
        std::string_view text = q.substr(tok.begin, tok.end - tok.begin);
        if (!tok.word) {
            bool opening = false;
            if (text == "\"") in_quote = !in_quote;
            else if (curly_quote_at(q, tok.begin, opening)) in_quote = opening;
            Unit u;
            u.kind = UnitKind::punct;
            u.lower = std::string(text);
            u.begin = tok.begin;
            u.end = tok.end;
            u.in_quote = in_quote;
            out.push_back(std::move(u));
            continue;
        }

        std::size_t suffix = possessive_suffix(text);
        std::string_view stem = text.substr(0, text.size() - suffix);
        bool honorific = honorifics().count(stem) > 0 && t + 1 < toks.size() &&
                         !toks[t + 1].word && q.substr(toks[t + 1].begin, 1) == "." &&
                         t + 2 < toks.size() && toks[t + 2].word &&
                         starts_upper(q.substr(toks[t + 2].begin, toks[t + 2].end - toks[t + 2].begin));
        bool name_word = starts_upper(stem) && function_words().count(text) == 0 &&
                         function_words().count(stem) == 0;

        if (name_word || honorific) {
            // Extend into a maximal run of adjacent capitalized words.
            std::size_t begin = tok.begin;
            std::size_t end = tok.begin + stem.size();
            bool possessive = suffix > 0;
            std::size_t u = t;
            if (honorific) {
                u = t + 1; // the period
            }
            while (!possessive && u + 1 < toks.size()) {
                const auto& next = toks[u + 1];
                if (!next.word) break;
                std::string_view nt = q.substr(next.begin, next.end - next.begin);
                std::size_t ns = possessive_suffix(nt);
                std::string_view nstem = nt.substr(0, nt.size() - ns);
                if (!starts_upper(nstem) || function_words().count(nstem) > 0) break;
                ++u;
                end = next.begin + nstem.size();
                possessive = ns > 0;
            }
            Unit n;
            n.kind = UnitKind::name;
            n.begin = begin;
            n.end = end;
            n.possessive = possessive;
            n.in_quote = in_quote;
            n.lower = lowercase(q.substr(begin, end - begin));
            out.push_back(std::move(n));
            t = u;
            continue;
        }

        Unit w;
        w.lower = lowercase(text);
        w.begin = tok.begin;
        w.end = tok.end;
        w.in_quote = in_quote;
        static const std::set<std::string, std::less<>> singular = {"he", "she", "him", "his", "her"};
        static const std::set<std::string, std::less<>> plural = {"they", "them", "their", "we", "you"};
        if (singular.count(w.lower)) w.kind = UnitKind::pronoun;
        else if (plural.count(w.lower)) { w.kind = UnitKind::pronoun; w.plural = true; }
        else w.kind = UnitKind::word;
        out.push_back(std::move(w));
    }
    return out;
}

struct Match {
    int tier;
    std::size_t position;
    std::optional<std::size_t> name_unit; // resolved name unit
    bool ambiguous = false;
};

} // namespace name_detail

inline ExtractionResult extract_target_name(std::string_view question,
                                            const std::vector<std::string>* known_characters = nullptr) {
    using namespace name_detail;
    const auto us = units(question);
    auto span = [&](std::size_t i) { return std::string(question.substr(us[i].begin, us[i].end - us[i].begin)); };
    auto allowed = [&](std::size_t i) {
        if (!known_characters) return true;
        const auto s = span(i);
        return std::find(known_characters->begin(), known_characters->end(), s) != known_characters->end();
    };

    // Nearest preceding name; names outside quotes first.
    auto resolve_pronoun = [&](std::size_t at) -> std::optional<std::size_t> {
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = at; k-- > 0;) {
                if (us[k].kind != UnitKind::name) continue;
                if (pass == 0 && us[k].in_quote) continue;
                if (!allowed(k)) continue;
                return k;
            }
        }
        return std::nullopt;
    };

    std::vector<Match> matches;
    bool np_subject_question = false;

    auto subject_at = [&](std::size_t i, Match& m) -> bool {
        if (i >= us.size()) return false;
        const auto& u = us[i];
        if (u.kind == UnitKind::name && !u.possessive) {
            // "Tom and Mary" names two people.
            if (i + 2 < us.size() && us[i + 1].lower == "and" &&
                (us[i + 2].kind == UnitKind::name || us[i + 2].kind == UnitKind::pronoun)) {
                m.ambiguous = true;
                return true;
            }
            if (!allowed(i)) return false;
            m.name_unit = i;
            return true;
        }
        if (u.kind == UnitKind::pronoun && u.lower != "his") {
            if (u.plural) {
                m.ambiguous = true;
                return true;
            }
            auto r = resolve_pronoun(i);
            if (!r) return false;
            m.name_unit = r;
            return true;
        }
        return false;
    };

    for (std::size_t i = 0; i < us.size(); ++i) {
        const auto& u = us[i];

        // Tiers 0 and 1: auxiliary + subject (+ mental verb).
        if (u.kind == UnitKind::word && auxiliaries().count(u.lower)) {
            Match m{1, i, std::nullopt};
            if (subject_at(i + 1, m)) {
                std::size_t j = i + 2;
                int gaps = 0;
                while (j < us.size() && us[j].kind == UnitKind::word && gap_words().count(us[j].lower) && gaps < 3) {
                    ++j;
                    ++gaps;
                }
                if (j < us.size() && us[j].kind == UnitKind::word && is_mental_verb(us[j].lower)) m.tier = 0;
                matches.push_back(m);
            } else if (i + 1 < us.size() && (us[i + 1].kind == UnitKind::word ||
                                             (us[i + 1].kind == UnitKind::name && us[i + 1].possessive) ||
                                             (us[i + 1].kind == UnitKind::pronoun && us[i + 1].lower == "his"))) {
                static const std::set<std::string, std::less<>> not_subjects = {
                    "there", "it", "that", "this", "likely", "not"};
                if (!not_subjects.count(us[i + 1].lower) && !is_mental_verb(us[i + 1].lower))
                    np_subject_question = true;
            }
        }

        // Tier 2: possessive + mental noun, with up to two modifiers between.
        bool possessor = (u.kind == UnitKind::name && u.possessive) ||
                         (u.kind == UnitKind::pronoun && (u.lower == "his" || u.lower == "her" || u.lower == "their"));
        if (possessor) {
            for (std::size_t j = i + 1; j < us.size() && j <= i + 3; ++j) {
                if (us[j].kind != UnitKind::word) break;
                if (mental_nouns().count(us[j].lower)) {
                    Match m{2, i, std::nullopt};
                    if (u.kind == UnitKind::name) {
                        if (allowed(i)) m.name_unit = i;
                    } else if (u.lower == "their") {
                        m.ambiguous = true;
                    } else {
                        m.name_unit = resolve_pronoun(i);
                    }
                    if (m.name_unit || m.ambiguous) matches.push_back(m);
                    break;
                }
            }
        }

        // Tier 3: subject + inflected mental verb.
        if ((u.kind == UnitKind::name && !u.possessive) || (u.kind == UnitKind::pronoun && !u.plural)) {
            std::size_t j = i + 1;
            int gaps = 0;
            while (j < us.size() && us[j].kind == UnitKind::word && gap_words().count(us[j].lower) && gaps < 2) {
                ++j;
                ++gaps;
            }
            if (j < us.size() && us[j].kind == UnitKind::word && is_inflected_mental_verb(us[j].lower)) {
                Match m{3, i, std::nullopt};
                if (u.kind == UnitKind::name) {
                    if (allowed(i)) m.name_unit = i;
                } else if (u.lower != "his" && u.lower != "him") {
                    m.name_unit = resolve_pronoun(i);
                }
                if (m.name_unit) matches.push_back(m);
            }
        }
    }

    if (!matches.empty()) {
        auto best = std::min_element(matches.begin(), matches.end(), [](const Match& a, const Match& b) {
            return a.tier != b.tier ? a.tier < b.tier : a.position < b.position;
        });
        if (best->ambiguous) return ExtractionResult::failure(ExtractionFailure::ambiguous);
        return ExtractionResult::success(span(*best->name_unit));
    }

    // The question is about someone who is not named ("what does the teacher think").
    if (np_subject_question) return ExtractionResult::failure(ExtractionFailure::no_candidate);

    std::set<std::string> names;
    for (std::size_t i = 0; i < us.size(); ++i)
        if (us[i].kind == UnitKind::name && allowed(i)) names.insert(span(i));
    if (names.empty()) return ExtractionResult::failure(ExtractionFailure::no_candidate);
    if (names.size() > 1) return ExtractionResult::failure(ExtractionFailure::ambiguous);
    return ExtractionResult::success(*names.begin());
}

inline ExtractionResult extract_target_name(std::string_view question,
                                            const std::vector<std::string>& known_characters) {
    return extract_target_name(question, &known_characters);
}

} // namespace tomeval
