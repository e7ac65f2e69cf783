#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"
#include "tomeval/judge.hpp"
#include "tomeval/report.hpp"

using namespace tomeval;
using testsupport::TempDir;

namespace {

struct VerdictCase {
    std::string text;
    Verdict expected;
};

// Hand-built; the last bracketed verdict wins.
const std::vector<VerdictCase>& verdict_corpus() {
    static const std::vector<VerdictCase> cases{
        {"...explanation... [[Y]]", Verdict::Y},
        {"leaning [[X]] but finally [[Z]]", Verdict::Z},
        {"no verdict", Verdict::invalid},
        {"[[X]]", Verdict::X},
        {"[X] single brackets do not count", Verdict::invalid},
        {"[[W]] is not a verdict", Verdict::invalid},
        {"[[Z]] then [[W]]", Verdict::Z},
        {"Verdict: \"[[Y]]\"", Verdict::Y},
        {"[[x]] lowercase", Verdict::invalid},
        {"[[[X]]]", Verdict::X},
    };
    return cases;
}

ItemResult item(const std::string& id, bool correct, const std::string& method, const std::string& thought = "t") {
    ItemResult r;
    r.record_id = id;
    r.method = method;
    r.correct = correct;
    r.thought = thought;
    return r;
}

RunLog log_of(const std::string& method, std::vector<ItemResult> items, std::uint32_t run = 0,
              const std::string& dataset = "syn") {
    RunLog l;
    l.header.dataset = dataset;
    l.header.method = method;
    l.header.run_index = run;
    l.items = std::move(items);
    return l;
}

std::vector<QuestionRecord> records(int n) {
    std::vector<QuestionRecord> rs;
    for (int i = 0; i < n; ++i) rs.push_back(testsupport::synthetic_record(i));
    return rs;
}

// Verdict that produces the wanted outcome for method a under the given assignment.
Verdict verdict_for(Outcome o, Assignment a) {
    if (o == Outcome::tie) return Verdict::Z;
    const bool a_is_x = a == Assignment::method_a_is_X;
    if (o == Outcome::win) return a_is_x ? Verdict::X : Verdict::Y;
    return a_is_x ? Verdict::Y : Verdict::X;
}

Assignment mirrored(Assignment a) {
    return a == Assignment::method_a_is_X ? Assignment::method_a_is_Y : Assignment::method_a_is_X;
}

} // namespace

TEST(ParseVerdict, Corpus) {
    ASSERT_EQ(verdict_corpus().size(), 10u);
    for (const auto& c : verdict_corpus()) EXPECT_EQ(parse_verdict(c.text), c.expected) << c.text;
}

TEST(ParseVerdict, SampleJudgeScriptIsParseable) {
    std::ifstream in(testsupport::samples_dir() / "judge_script.jsonl");
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        EXPECT_NE(parse_verdict(j["text"].get<std::string>()), Verdict::invalid);
        ++n;
    }
    EXPECT_GT(n, 0);
}

TEST(OutcomeMapping, Definition) {
    EXPECT_EQ(outcome_for_a(Assignment::method_a_is_Y, Verdict::Y), Outcome::win);
    EXPECT_EQ(outcome_for_a(Assignment::method_a_is_Y, Verdict::X), Outcome::lose);
    EXPECT_EQ(outcome_for_a(Assignment::method_a_is_X, Verdict::X), Outcome::win);
    EXPECT_EQ(outcome_for_a(Assignment::method_a_is_X, Verdict::Y), Outcome::lose);
    for (auto a : {Assignment::method_a_is_X, Assignment::method_a_is_Y}) {
        EXPECT_EQ(outcome_for_a(a, Verdict::Z), Outcome::tie);
        EXPECT_EQ(outcome_for_a(a, Verdict::invalid), Outcome::invalid);
    }
}

TEST(OutcomeMapping, AntisymmetryOnRandomFixture) {
    std::mt19937_64 gen(123);
    const Verdict vs[] = {Verdict::X, Verdict::Y, Verdict::Z};
    for (int i = 0; i < 100; ++i) {
        const auto a = draw_assignment(gen(), "r" + std::to_string(i));
        const auto v = vs[gen() % 3];
        const auto forward = outcome_for_a(a, v);
        const auto swapped = outcome_for_a(mirrored(a), v);
        if (forward == Outcome::tie) EXPECT_EQ(swapped, Outcome::tie);
        if (forward == Outcome::win) EXPECT_EQ(swapped, Outcome::lose);
        if (forward == Outcome::lose) EXPECT_EQ(swapped, Outcome::win);
    }
}

TEST(Assignment, BalancedOverManyDraws) {
    int x = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i)
        if (draw_assignment(42, "rec-" + std::to_string(i)) == Assignment::method_a_is_X) ++x;
    EXPECT_NEAR(100.0 * x / n, 50.0, 2.0);
}

TEST(Assignment, DeterministicPerRecord) {
    EXPECT_EQ(draw_assignment(7, "a"), draw_assignment(7, "a"));
}

TEST(Aggregate, Counts708GiveReportedRates) {
    // 708 comparable items split 129 / 478 / 101.
    auto rs = records(708);
    std::vector<JudgeItem> items;
    for (int i = 0; i < 708; ++i) {
        JudgeItem it;
        it.record_id = rs[static_cast<std::size_t>(i)].id;
        it.assignment = draw_assignment(42, it.record_id);
        const Outcome o = i < 129 ? Outcome::win : i < 129 + 478 ? Outcome::tie : Outcome::lose;
        it.verdict = verdict_for(o, it.assignment);
        items.push_back(it);
    }
    auto stats = aggregate(items, rs);
    const auto& all = stats.back();
    EXPECT_TRUE(all.subset.is_all());
    EXPECT_EQ(all.n, 708u);
    EXPECT_EQ(rate_cell(all.win_pct()), "18.22");
    EXPECT_EQ(rate_cell(all.tie_pct()), "67.51");
    EXPECT_EQ(rate_cell(all.lose_pct()), "14.27");
    EXPECT_NEAR(*all.win_pct() + *all.tie_pct() + *all.lose_pct(), 100.0, 1e-9);
}

TEST(Aggregate, InvalidExcludedFromN) {
    auto rs = records(3);
    std::vector<JudgeItem> items(3);
    for (int i = 0; i < 3; ++i) items[static_cast<std::size_t>(i)].record_id = rs[static_cast<std::size_t>(i)].id;
    items[0].verdict = Verdict::Z;
    items[1].verdict = Verdict::Z;
    items[2].verdict = Verdict::invalid;
    auto all = aggregate(items, rs).back();
    EXPECT_EQ(all.n, 2u);
    EXPECT_EQ(all.invalid, 1u);
    EXPECT_DOUBLE_EQ(*all.tie_pct(), 100.0);
}

TEST(SelectComparable, BothCorrectOnly) {
    auto a = log_of("soo_prefixing", {item("syn-0", true, "soo_prefixing"), item("syn-1", true, "soo_prefixing"),
                                      item("syn-2", false, "soo_prefixing")});
    auto b = log_of("cot_prefixing", {item("syn-0", true, "cot_prefixing"), item("syn-1", false, "cot_prefixing"),
                                      item("syn-2", true, "cot_prefixing")});
    EXPECT_EQ(select_comparable({a}, {b}), std::vector<std::string>{"syn-0"});
}

TEST(SelectComparable, Errors) {
    auto a = log_of("soo_prefixing", {item("syn-0", true, "soo_prefixing")});
    auto b = log_of("cot_prefixing", {item("syn-9", true, "cot_prefixing")});
    EXPECT_THROW(select_comparable({a}, {b}), Error);
    auto c = log_of("cot_prefixing", {item("syn-0", true, "cot_prefixing")}, 0, "other");
    EXPECT_THROW(select_comparable({a}, {c}), Error);
    EXPECT_THROW(select_comparable({a}, {b}, 1), Error);
}

TEST(JudgeMessages, Layout) {
    auto r = testsupport::synthetic_record(0);
    auto req = build_judge_messages(r, "answer one", "answer two");
    EXPECT_EQ(req.system, kJudgeSystemMessage);
    EXPECT_FALSE(req.assistant_prefix);
    EXPECT_EQ(req.method, "judge");
    EXPECT_TRUE(req.user.starts_with("[Context]\n"));
    EXPECT_NE(req.user.find("[The Start of Assistant X’s Answer]\nanswer one\n[The End of Assistant X’s Answer]"),
              std::string::npos);
    EXPECT_TRUE(req.user.ends_with("answer two\n[The End of Assistant Y’s Answer]"));
    EXPECT_NE(std::string(kJudgeSystemMessage).find("\"[[Z]]\" for a tie."), std::string::npos);
}

TEST(CompareMethods, AllTiesAndAnswersPlacedBySlot) {
    auto rs = records(10);
    std::vector<ItemResult> ia, ib;
    for (const auto& r : rs) {
        ia.push_back(item(r.id, true, "soo_prefixing", "SOO " + r.id));
        ib.push_back(item(r.id, true, "cot_prefixing", "COT " + r.id));
    }
    auto judge = std::make_shared<FunctionBackend>(
        [](const ChatRequest&, const GenParams&, const CallContext&) { return BackendReply{"Both fine. [[Z]]"}; },
        false, "judge");
    ModelClient client(judge);
    JudgeOptions opt;
    opt.seed = 42;
    auto result = compare_methods({log_of("soo_prefixing", ia)}, {log_of("cot_prefixing", ib)}, rs, client, opt);
    ASSERT_EQ(result.items.size(), 10u);
    for (const auto& it : result.items) {
        const auto& a_text = it.assignment == Assignment::method_a_is_X ? it.answer_x : it.answer_y;
        EXPECT_EQ(a_text, "SOO " + it.record_id);
    }
    const auto& all = result.stats.back();
    EXPECT_EQ(winrate_cells(all), (std::vector<std::string>{"0.00", "100.00", "0.00", "n=10", "0"}));
}

TEST(CompareMethods, JudgeFailureIsInvalidAndLogResumes) {
    TempDir dir;
    auto rs = records(6);
    std::vector<ItemResult> ia, ib;
    for (const auto& r : rs) {
        ia.push_back(item(r.id, true, "soo_prefixing"));
        ib.push_back(item(r.id, true, "cot_prefixing"));
    }
    std::atomic<int> calls{0};
    auto judge = std::make_shared<FunctionBackend>(
        [&](const ChatRequest& r, const GenParams&, const CallContext&) -> BackendReply {
            ++calls;
            if (r.record_id == "syn-2") throw MalformedResponse("garbled");
            return BackendReply{"[[X]]"};
        },
        false, "judge");
    ModelClient client(judge);
    JudgeOptions opt;
    opt.seed = 1;
    opt.log_path = dir / "judge.jsonl";
    opt.clock = [] { return std::string("t0"); };
    auto first = compare_methods({log_of("soo_prefixing", ia)}, {log_of("cot_prefixing", ib)}, rs, client, opt);
    EXPECT_EQ(first.stats.back().invalid, 1u);
    EXPECT_EQ(first.stats.back().n, 5u);
    const int after_first = calls.load();

    opt.clock = [] { return std::string("t1"); };
    auto again = compare_methods({log_of("soo_prefixing", ia)}, {log_of("cot_prefixing", ib)}, rs, client, opt);
    EXPECT_EQ(calls.load(), after_first);
    EXPECT_EQ(again.items.size(), first.items.size());
}

TEST(CompareMethods, SwappingInputsSwapsWinAndLose) {
    auto rs = records(40);
    std::vector<ItemResult> ia, ib;
    for (const auto& r : rs) {
        ia.push_back(item(r.id, true, "soo_prefixing", "A"));
        ib.push_back(item(r.id, true, "cot_prefixing", "B"));
    }
    // The judge prefers whichever slot holds "A"; ties on even ids.
    auto judge = std::make_shared<FunctionBackend>(
        [](const ChatRequest& r, const GenParams&, const CallContext&) {
            const int id = std::stoi(r.record_id.substr(4));
            if (id % 2 == 0) return BackendReply{"[[Z]]"};
            const bool a_in_x = r.user.find("X’s Answer]\nA\n") != std::string::npos;
            return BackendReply{a_in_x ? "[[X]]" : "[[Y]]"};
        },
        false, "judge");
    ModelClient client(judge);
    JudgeOptions opt;
    auto ab = compare_methods({log_of("soo_prefixing", ia)}, {log_of("cot_prefixing", ib)}, rs, client, opt);
    auto ba = compare_methods({log_of("cot_prefixing", ib)}, {log_of("soo_prefixing", ia)}, rs, client, opt);
    EXPECT_EQ(ab.stats.back().wins, ba.stats.back().losses);
    EXPECT_EQ(ab.stats.back().losses, ba.stats.back().wins);
    EXPECT_EQ(ab.stats.back().ties, ba.stats.back().ties);
    EXPECT_EQ(ab.stats.back().wins, 20u);
}

TEST(JudgeItemJson, RoundTrip) {
    JudgeItem i;
    i.record_id = "r";
    i.answer_x = "x";
    i.answer_y = "y";
    i.assignment = Assignment::method_a_is_Y;
    i.verdict = Verdict::Y;
    i.judge_text = "[[Y]]";
    auto back = judge_item_from_json(to_json(i));
    EXPECT_EQ(to_json(back), to_json(i));
    EXPECT_EQ(to_json(i)["outcome"], "win");
}
