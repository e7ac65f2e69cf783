#pragma once

// Markdown and CSV tables in the layouts used for accuracy, personality, ablation,
// win/tie/lose, length, word-statistic, and scatter reports. Both formats parse back.

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tomeval/corpus.hpp"
#include "tomeval/error.hpp"
#include "tomeval/judge.hpp"
#include "tomeval/prompting.hpp"
#include "tomeval/runner.hpp"
#include "tomeval/stats.hpp"

namespace tomeval {

struct Table {
    std::string title;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> notes;

    bool operator==(const Table&) const = default;
};

inline constexpr std::string_view kUndefinedCell = "-";

// ---------------------------------------------------------------------------
// Markdown

namespace report_detail {

inline std::string escape_md(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '|' || c == '\\') out += '\\';
        out += c == '\n' ? ' ' : c;
    }
    return out;
}

// Display width in code points, so "±" counts once.
inline std::size_t width(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

inline std::vector<std::string> split_md_row(std::string_view line) {
    std::vector<std::string> cells;
    auto start = line.find('|');
    if (start == std::string_view::npos) throw Error("not a table row: " + std::string(line));
    std::string cur;
    bool escaped = false;
    for (std::size_t i = start + 1; i < line.size(); ++i) {
        const char c = line[i];
        if (escaped) {
            cur += c;
            escaped = false;
        } else if (c == '\\') {
            escaped = true;
        } else if (c == '|') {
            cells.push_back(rstrip(cur.substr(std::min(cur.find_first_not_of(' '), cur.size()))));
            cur.clear();
        } else {
            cur += c;
        }
    }
    return cells;
}

} // namespace report_detail

inline std::string to_markdown(const Table& t) {
    using report_detail::escape_md;
    using report_detail::width;
    std::vector<std::size_t> w(t.header.size(), 3);
    auto fit = [&](const std::vector<std::string>& row) {
        if (row.size() != t.header.size()) throw Error("table row width does not match header in " + t.title);
        for (std::size_t i = 0; i < row.size(); ++i) w[i] = std::max(w[i], width(escape_md(row[i])));
    };
    fit(t.header);
    for (const auto& r : t.rows) fit(r);

    std::ostringstream out;
    if (!t.title.empty()) out << "### " << t.title << "\n\n";
    auto emit = [&](const std::vector<std::string>& row) {
        out << '|';
        for (std::size_t i = 0; i < row.size(); ++i) {
            const auto cell = escape_md(row[i]);
            out << ' ' << cell << std::string(w[i] - width(cell), ' ') << " |";
        }
        out << '\n';
    };
    emit(t.header);
    out << '|';
    for (std::size_t i = 0; i < w.size(); ++i)
        out << (i == 0 ? ":" : "-") << std::string(w[i], '-') << (i == 0 ? "-" : ":") << '|';
    out << '\n';
    for (const auto& r : t.rows) emit(r);
    if (!t.notes.empty()) {
        out << '\n';
        for (const auto& n : t.notes) out << n << '\n';
    }
    return out.str();
}

// Parses one table as written by to_markdown.
inline Table parse_markdown_table(std::string_view text) {
    Table t;
    std::istringstream in{std::string(text)};
    std::string line;
    enum { before, separator, body, notes } state = before;
    while (std::getline(in, line)) {
        if (state == before) {
            if (line.rfind("### ", 0) == 0) {
                t.title = line.substr(4);
            } else if (!line.empty() && line[0] == '|') {
                t.header = report_detail::split_md_row(line);
                state = separator;
            }
            continue;
        }
        if (state == separator) {
            state = body;
            continue;
        }
        if (state == body) {
            if (!line.empty() && line[0] == '|') {
                auto row = report_detail::split_md_row(line);
                if (row.size() != t.header.size()) throw Error("markdown row width mismatch: " + line);
                t.rows.push_back(std::move(row));
                continue;
            }
            state = notes;
        }
        if (state == notes && !line.empty()) t.notes.push_back(line);
    }
    if (t.header.empty()) throw Error("no markdown table found");
    return t;
}

// ---------------------------------------------------------------------------
// CSV (header row + data rows; title and notes are not carried)

inline std::string csv_escape(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string to_csv(const Table& t) {
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_escape(row[i]);
        out << '\n';
    };
    emit(t.header);
    for (const auto& r : t.rows) {
        if (r.size() != t.header.size()) throw Error("table row width does not match header in " + t.title);
        emit(r);
    }
    return out.str();
}

inline Table parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
            continue;
        }
        if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
            any = true;
        } else if (c == '\n' || c == '\r') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            if (any || !cell.empty()) {
                row.push_back(std::move(cell));
                rows.push_back(std::move(row));
            }
            row.clear();
            cell.clear();
            any = false;
        } else {
            cell += c;
            any = true;
        }
    }
    if (quoted) throw Error("unterminated quoted CSV field");
    if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw Error("empty CSV");
    Table t;
    t.header = std::move(rows.front());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != t.header.size()) throw Error("CSV row " + std::to_string(i + 1) + " width mismatch");
        t.rows.push_back(std::move(rows[i]));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Cells

inline std::string accuracy_cell(const std::optional<double>& v) {
    return v ? format_fixed(*v, 1) : std::string(kUndefinedCell);
}

inline std::string rate_cell(const std::optional<double>& v) {
    return v ? format_fixed(*v, 2) : std::string(kUndefinedCell);
}

inline std::string method_label(std::string_view method) {
    auto m = parse_method(method);
    return m ? std::string(display_name(*m)) : std::string(method);
}

inline std::string runs_note(std::size_t runs) {
    return "Accuracies (%) averaged over " + std::to_string(runs) + (runs == 1 ? " run." : " runs.");
}

// Run count shared by all reports; the note reflects the smallest when they differ.
inline std::size_t common_runs(const std::vector<ScoreReport>& reports) {
    std::size_t runs = 0;
    for (const auto& r : reports) runs = runs == 0 ? r.runs : std::min(runs, r.runs);
    return runs;
}

// ---------------------------------------------------------------------------
// Accuracy tables

enum class RowScope { overall, first_order, second_true_belief, second_false_belief };

inline const CategoryRow& select_row(const ScoreReport& r, RowScope s) {
    switch (s) {
    case RowScope::overall: return r.overall;
    case RowScope::first_order: return r.first_order;
    case RowScope::second_true_belief: return r.second_true_belief;
    case RowScope::second_false_belief: return r.second_false_belief;
    }
    return r.overall;
}

inline void append_category_cells(std::vector<std::string>& row, const CategoryRow& c) {
    for (const auto& cell : c.cells) row.push_back(accuracy_cell(cell.mean));
    row.push_back(accuracy_cell(c.avg));
}

inline std::vector<std::string> category_header(std::string_view prefix = {}) {
    std::vector<std::string> h;
    for (const char* c : {"B", "I", "D", "E", "K", "Avg."}) h.push_back(std::string(prefix) + c);
    return h;
}

// Columns B, I, D, E, K, Avg.; one row per method.
inline Table accuracy_table(const std::vector<ScoreReport>& reports, RowScope scope, std::string title) {
    Table t;
    t.title = std::move(title);
    t.header = {"Method"};
    for (auto& h : category_header()) t.header.push_back(h);
    for (const auto& r : reports) {
        std::vector<std::string> row{method_label(r.method)};
        append_category_cells(row, select_row(r, scope));
        t.rows.push_back(std::move(row));
    }
    t.notes.push_back(runs_note(common_runs(reports)));
    t.notes.push_back("B: belief, I: intention, D: desire, E: emotion, K: knowledge. Avg. is the unweighted mean of "
                      "the five category accuracies.");
    return t;
}

// True-belief and false-belief blocks side by side for second-order questions.
inline Table second_order_table(const std::vector<ScoreReport>& reports, std::string title) {
    Table t;
    t.title = std::move(title);
    t.header = {"Method"};
    for (auto& h : category_header("TB ")) t.header.push_back(h);
    for (auto& h : category_header("FB ")) t.header.push_back(h);
    for (const auto& r : reports) {
        std::vector<std::string> row{method_label(r.method)};
        append_category_cells(row, r.second_true_belief);
        append_category_cells(row, r.second_false_belief);
        t.rows.push_back(std::move(row));
    }
    t.notes.push_back(runs_note(common_runs(reports)));
    return t;
}

// O/C/E/A/N x high/low for one question order.
inline Table personality_table(const std::vector<ScoreReport>& reports, Order order, std::string title) {
    Table t;
    t.title = std::move(title);
    t.header = {"Method"};
    for (auto f : kFactors)
        for (auto l : {Level::high, Level::low})
            t.header.push_back(std::string(to_string(f)) + " " + std::string(to_string(l)));
    for (const auto& r : reports) {
        std::vector<std::string> row{method_label(r.method)};
        for (auto f : kFactors)
            for (auto l : {Level::high, Level::low}) {
                auto it = r.facets.find({order, f, l});
                row.push_back(it == r.facets.end() ? std::string(kUndefinedCell) : accuracy_cell(it->second.mean));
            }
        t.rows.push_back(std::move(row));
    }
    t.notes.push_back(runs_note(common_runs(reports)));
    t.notes.push_back("O=openness to experience, C=conscientiousness, E=extraversion, A=agreeableness, "
                      "N=neuroticism.");
    return t;
}

// SoO prefixing and its name-free variants; accuracy is the Avg. over all questions.
inline Table ablation_table(const std::map<std::string, std::vector<ScoreReport>>& by_dataset, std::string title) {
    Table t;
    t.title = std::move(title);
    t.header = {"Method", "Prefix"};
    for (const auto& [dataset, _] : by_dataset) t.header.push_back(dataset);
    std::size_t runs = 0;
    for (auto m : {Method::soo_prefixing, Method::soo_prefix_others, Method::soo_prefix_shoes_of_others}) {
        std::vector<std::string> row{m == Method::soo_prefixing ? "SoO Prefixing" : "- name",
                                     *method_spec(m).output_prefix_template};
        bool present = false;
        for (const auto& [dataset, reports] : by_dataset) {
            std::string cell(kUndefinedCell);
            for (const auto& r : reports)
                if (r.method == to_string(m)) {
                    cell = accuracy_cell(r.overall.avg);
                    present = true;
                    runs = runs == 0 ? r.runs : std::min(runs, r.runs);
                }
            row.push_back(cell);
        }
        if (present) t.rows.push_back(std::move(row));
    }
    t.notes.push_back(runs_note(runs));
    return t;
}

// ---------------------------------------------------------------------------
// Judge tables

inline std::vector<std::string> winrate_cells(const PairwiseStats& s) {
    return {rate_cell(s.win_pct()), rate_cell(s.tie_pct()), rate_cell(s.lose_pct()), "n=" + std::to_string(s.n),
            std::to_string(s.invalid)};
}

// One row per subset, ALL last; rates are method a's outcomes.
inline Table winrate_table(const std::vector<PairwiseStats>& stats, std::string title, bool include_facets = false) {
    Table t;
    t.title = std::move(title);
    t.header = {"Subset", "Win", "Tie", "Lose", "n", "Invalid"};
    for (const auto& s : stats) {
        if (s.subset.facet && !include_facets) continue;
        std::vector<std::string> row{s.subset.label()};
        for (auto& c : winrate_cells(s)) row.push_back(std::move(c));
        t.rows.push_back(std::move(row));
    }
    t.notes.push_back("Win/tie/lose rates (%) over valid verdicts; invalid verdicts are counted separately.");
    return t;
}

// ALL-row summary across datasets or models.
inline Table winrate_summary_table(const std::vector<std::pair<std::string, PairwiseStats>>& rows, std::string title) {
    Table t;
    t.title = std::move(title);
    t.header = {"Name", "Win", "Tie", "Lose", "n", "Invalid"};
    for (const auto& [name, s] : rows) {
        std::vector<std::string> row{name};
        for (auto& c : winrate_cells(s)) row.push_back(std::move(c));
        t.rows.push_back(std::move(row));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Analysis tables

inline Table length_table(const std::vector<LengthStats>& stats, std::string title, std::string_view tokenizer) {
    Table t;
    t.title = std::move(title);
    t.header = {"Method", "n", "Tokens"};
    for (const auto& s : stats) t.rows.push_back({method_label(s.method), std::to_string(s.n), format_mean_std(s)});
    t.notes.push_back("Mean±standard deviation of thought token counts (" + std::string(tokenizer) + ").");
    return t;
}

inline Table histogram_table(const std::vector<LengthStats>& stats, std::string title) {
    Table t;
    t.title = std::move(title);
    t.header = {"method", "bin_start", "bin_end", "count"};
    for (const auto& s : stats)
        for (std::size_t i = 0; i < s.histogram.counts.size(); ++i)
            t.rows.push_back({s.method, std::to_string(s.histogram.edges[i]), std::to_string(s.histogram.edges[i + 1]),
                              std::to_string(s.histogram.counts[i])});
    return t;
}

inline Table word_table(const std::vector<WordStat>& words, std::string title) {
    Table t;
    t.title = std::move(title);
    t.header = {"word", "n", "k", "p_hat", "z", "significant"};
    for (const auto& w : words)
        t.rows.push_back({w.word, std::to_string(w.n), std::to_string(w.k), format_fixed(w.p_hat, 4),
                          format_fixed(w.z, 4), w.significant ? "true" : "false"});
    return t;
}

inline std::string pearson_note(const std::optional<double>& r) {
    return "pearson_r=" + (r ? format_fixed(*r, 4) : std::string("undefined"));
}

inline Table scatter_table(const std::vector<ScatterPoint>& points, std::string title, std::string x_name,
                           std::string y_name) {
    Table t;
    t.title = std::move(title);
    t.header = {"subset", std::move(x_name), std::move(y_name)};
    for (const auto& p : points) t.rows.push_back({p.label, format_fixed(p.x, 4), format_fixed(p.y, 4)});
    t.notes.push_back(pearson_note(pearson(points)));
    return t;
}

} // namespace tomeval
