// Acceptance checks. Prints one PASS/FAIL line per criterion and exits nonzero if any fail.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "test_support.hpp"
#include "tomeval/commands.hpp"
#include "tomeval/config.hpp"
#include "tomeval/http_backend.hpp"
#include "tomeval/judge.hpp"
#include "tomeval/report.hpp"
#include "tomeval/runner.hpp"
#include "tomeval/stats.hpp"

using namespace tomeval;
using testsupport::TempDir;

namespace {

// Pinned tolerances.
constexpr double kUniformTarget = 25.0;
constexpr double kUniformTolerance = 3.0;
constexpr double kBalanceTolerance = 2.0;
constexpr double kPearsonRelTol = 1e-12;
constexpr double kZTol = 1e-12;
constexpr double kBinomialAlpha = 0.05;
constexpr double kLengthTol = 1e-9;
constexpr double kNameAccuracyMin = 0.90;

struct Check {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void check_runtime(Check& o, Clock::time_point t0, double limit) {
    const double s = seconds_since(t0);
    char buf[96];
    std::snprintf(buf, sizeof buf, "runtime %.2fs exceeds %.0fs", s, limit);
    o.check(s < limit, buf);
}

std::vector<QuestionRecord> synthetic_records(int n) {
    std::vector<QuestionRecord> rs;
    rs.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        rs.push_back(testsupport::synthetic_record(i, kCategories[static_cast<std::size_t>(i) % 5], i % 4));
    return rs;
}

RunOptions run_options(const std::filesystem::path& dir) {
    RunOptions o;
    o.dataset_id = "acceptance";
    o.backend_id = "uniform";
    o.runs = 1;
    o.seed = 2024;
    o.out_dir = dir;
    o.parallelism = 8;
    o.clock = [] { return std::string("2026-01-01T00:00:00Z"); };
    return o;
}

// ---------------------------------------------------------------------------

Check criterion1() {
    Check o;
    const auto t0 = Clock::now();
    int files = 0;
    for (auto bench : {Benchmark::tomato, Benchmark::tombench}) {
        const auto record = bench == Benchmark::tomato ? testsupport::ethan_record() : testsupport::sara_record();
        for (auto m : kAllMethods) {
            const auto path = testsupport::goldens_dir() /
                              (std::string(to_string(bench)) + "__" + std::string(to_string(m)) + ".json");
            if (!std::filesystem::exists(path)) {
                o.check(false, "missing golden " + path.filename().string());
                continue;
            }
            const auto golden = testsupport::read_file(path);
            const auto actual = to_json(build_messages(record, m)).dump(2) + "\n";
            o.check(golden == actual, "mismatch " + path.filename().string());
            o.check(golden.find("You are an expert at understanding human communication") != std::string::npos,
                    "system sentence absent in " + path.filename().string());
            ++files;
        }
    }
    o.check(files == 14, "expected 14 goldens, found " + std::to_string(files));
    check_runtime(o, t0, 1.0);
    if (o.pass) o.detail = "14 goldens byte-identical";
    return o;
}

Check criterion2() {
    Check o;
    const auto req = build_messages(testsupport::ethan_record(), Method::soo_prefixing);
    o.check(req.assistant_prefix && *req.assistant_prefix == "Let's put ourselves in Ethan's shoes.",
            "prefix was '" + req.assistant_prefix.value_or("<none>") + "'");
    if (o.pass) o.detail = "\"Let's put ourselves in Ethan's shoes.\"";
    return o;
}

Check criterion3() {
    Check o;
    std::ifstream in(testsupport::data_dir() / "name_corpus.jsonl");
    std::string line;
    std::size_t total = 0, correct = 0, silent_wrong = 0;
    bool ethan = false, sara = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        const std::string q = j["question"], expected = j["expected"];
        const auto r = extract_target_name(q);
        const std::string got = r.ok() ? r.name() : std::string(to_string(r.failure()));
        ++total;
        if (got == expected) ++correct;
        else if (r.ok()) ++silent_wrong;
        if (q == testsupport::ethan_record().question) ethan = got == "Ethan";
        if (q == testsupport::sara_record().question) sara = got == "Sara";
    }
    const double acc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    o.check(total >= 30, "corpus has " + std::to_string(total) + " questions");
    o.check(ethan, "Ethan question did not give Ethan");
    o.check(sara, "Sara question did not give Sara");
    o.check(acc >= kNameAccuracyMin, "accuracy " + format_fixed(100.0 * acc, 1) + "%");
    o.check(silent_wrong == 0, std::to_string(silent_wrong) + " silent wrong names");
    if (o.pass)
        o.detail = std::to_string(correct) + "/" + std::to_string(total) + " correct, Ethan and Sara found, 0 silent errors";
    return o;
}

Check criterion4() {
    Check o;
    const auto t0 = Clock::now();
    TempDir dir;
    const auto rs = synthetic_records(10000);
    ModelClient client(std::make_shared<UniformChoiceMock>(true), {}, 0.0, 8);
    const auto rep = score(run_experiment(rs, Method::vanilla, client, run_options(dir.path())), rs);
    std::size_t correct = 0, n = 0;
    for (const auto& item : read_run_log(dir / log_file_name([&] {
                                             RunHeader h;
                                             h.dataset = "acceptance";
                                             h.method = "vanilla";
                                             h.backend = "uniform";
                                             h.seed = 2024;
                                             return h;
                                         }()))
                                .items) {
        ++n;
        if (item.correct) ++correct;
    }
    const double acc = 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    o.check(n == 10000, "logged " + std::to_string(n) + " items");
    o.check(std::fabs(acc - kUniformTarget) <= kUniformTolerance, "accuracy " + format_fixed(acc, 2) + "%");
    check_runtime(o, t0, 10.0);
    if (o.pass) o.detail = "accuracy " + format_fixed(acc, 2) + "% over 10000 items (Avg. " + accuracy_cell(rep.overall.avg) + ")";
    return o;
}

Check criterion5() {
    Check o;
    TempDir dir;
    const auto record = testsupport::ethan_record();
    auto mock = std::make_shared<ScriptedMock>(
        ScriptedMock::from_file((testsupport::samples_dir() / "mock_script.jsonl").string()));
    ModelClient client(mock);
    auto opt = run_options(dir.path());
    opt.backend_id = "mock";
    const auto soo = run_experiment({record}, Method::soo_prefixing, client, opt)[0].items.at(0);
    const auto cot = run_experiment({record}, Method::cot_prefixing, client, opt)[0].items.at(0);
    o.check(record.gold_letter() == 'A', "gold is not A");
    o.check(soo.predicted == Choice::A && soo.correct, "SoO gave " + std::string(to_string(soo.predicted)));
    o.check(soo.thought.starts_with("Let's put ourselves in Ethan's shoes."), "SoO thought lacks the prefix");
    o.check(cot.predicted == Choice::B && !cot.correct, "CoT gave " + std::string(to_string(cot.predicted)));
    if (o.pass) o.detail = "SoO -> A (correct), CoT -> B (incorrect)";
    return o;
}

Check criterion6() {
    Check o;
    const auto t0 = Clock::now();

    int x = 0;
    for (int i = 0; i < 10000; ++i)
        if (draw_assignment(7, "item-" + std::to_string(i)) == Assignment::method_a_is_X) ++x;
    const double pct_x = x / 100.0;
    o.check(std::fabs(pct_x - 50.0) <= kBalanceTolerance && std::fabs((100.0 - pct_x) - 50.0) <= kBalanceTolerance,
            "slot X share " + format_fixed(pct_x, 2) + "%");

    std::mt19937_64 gen(99);
    const Verdict verdicts[] = {Verdict::X, Verdict::Y, Verdict::Z};
    int violations = 0;
    for (int i = 0; i < 100; ++i) {
        const auto a = draw_assignment(gen(), "anti-" + std::to_string(i));
        const auto mirror = a == Assignment::method_a_is_X ? Assignment::method_a_is_Y : Assignment::method_a_is_X;
        const auto v = verdicts[gen() % 3];
        const auto f = outcome_for_a(a, v), s = outcome_for_a(mirror, v);
        const bool ok = (f == tomeval::Outcome::tie && s == tomeval::Outcome::tie) ||
                        (f == tomeval::Outcome::win && s == tomeval::Outcome::lose) ||
                        (f == tomeval::Outcome::lose && s == tomeval::Outcome::win);
        if (!ok) ++violations;
    }
    o.check(violations == 0, std::to_string(violations) + " antisymmetry violations");

    // 708 comparable items: 129 wins, 478 ties, 101 losses.
    std::vector<QuestionRecord> rs = synthetic_records(708);
    std::vector<JudgeItem> items;
    for (int i = 0; i < 708; ++i) {
        JudgeItem it;
        it.record_id = rs[static_cast<std::size_t>(i)].id;
        it.assignment = draw_assignment(42, it.record_id);
        const bool a_is_x = it.assignment == Assignment::method_a_is_X;
        if (i < 129) it.verdict = a_is_x ? Verdict::X : Verdict::Y;
        else if (i < 129 + 478) it.verdict = Verdict::Z;
        else it.verdict = a_is_x ? Verdict::Y : Verdict::X;
        items.push_back(it);
    }
    const auto all = aggregate(items, rs).back();
    const auto cells = winrate_cells(all);
    const double sum = std::stod(cells[0]) + std::stod(cells[1]) + std::stod(cells[2]);
    o.check(cells[0] == "18.22" && cells[1] == "67.51" && cells[2] == "14.27",
            "rates " + cells[0] + "/" + cells[1] + "/" + cells[2]);
    o.check(format_fixed(sum, 2) == "100.00", "sum " + format_fixed(sum, 2));
    check_runtime(o, t0, 5.0);
    if (o.pass)
        o.detail = "slot X " + format_fixed(pct_x, 2) + "%, antisymmetry 100/100, 18.22 + 67.51 + 14.27 = 100.00";
    return o;
}

// Two-sided exact binomial p-value: total probability of outcomes no more likely than k.
double binomial_two_sided(int n, int k, double p) {
    std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i)
        pmf[static_cast<std::size_t>(i)] =
            std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * std::log(p) +
                     (n - i) * std::log(1.0 - p));
    const double pk = pmf[static_cast<std::size_t>(k)];
    double total = 0.0;
    for (double v : pmf)
        if (v <= pk * (1.0 + 1e-7)) total += v;
    return std::min(1.0, total);
}

double pearson_oracle(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
    }
    return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

Check criterion7() {
    Check o;
    const auto t0 = Clock::now();

    const std::vector<std::pair<std::vector<double>, std::vector<double>>> fixed{
        {{1, 2, 3}, {2, 4, 6}},
        {{1, 2, 3}, {3, 2, 1}},
        {{0, 1, 2, 3}, {1, 0, 3, 2}},
        {{2, 4, 4, 4, 5, 5, 7, 9}, {1, 3, 2, 5, 4, 6, 8, 9}},
        {{10.5, -3.25, 7.0, 0.0, 2.5}, {1.0, 4.0, -2.0, 3.5, 0.25}},
    };
    for (std::size_t i = 0; i < fixed.size(); ++i) {
        const auto r = pearson(fixed[i].first, fixed[i].second);
        const double want = pearson_oracle(fixed[i].first, fixed[i].second);
        o.check(r && std::fabs(*r - want) <= kPearsonRelTol * std::max(1.0, std::fabs(want)),
                "pearson vector " + std::to_string(i));
    }
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(-100.0, 100.0);
    std::uniform_int_distribution<int> len(2, 30);
    int out_of_bounds = 0;
    for (int t = 0; t < 1000; ++t) {
        const int n = len(gen);
        std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            x[static_cast<std::size_t>(i)] = u(gen);
            y[static_cast<std::size_t>(i)] = u(gen);
        }
        const auto r = pearson(x, y);
        if (r && (*r < -1.0 || *r > 1.0)) ++out_of_bounds;
    }
    o.check(out_of_bounds == 0, std::to_string(out_of_bounds) + " random r outside [-1,1]");

    const std::vector<std::pair<std::size_t, std::size_t>> pairs{{100, 70}, {100, 50}, {20, 15}, {40, 10}, {25, 25},
                                                                  {1000, 530}, {60, 21}, {33, 20}, {500, 0}, {7, 3}};
    for (const auto& [n, k] : pairs) {
        const double direct = (static_cast<double>(k) / static_cast<double>(n) - 0.5) / std::sqrt(0.25 / static_cast<double>(n));
        o.check(std::fabs(z_score(n, k) - direct) <= kZTol * std::max(1.0, std::fabs(direct)),
                "z(" + std::to_string(n) + "," + std::to_string(k) + ")");
    }

    std::vector<std::string> disagreements;
    for (int n = 1; n <= 12; ++n)
        for (int k = 0; k <= n; ++k) {
            const bool z_sig = std::fabs(z_score(static_cast<std::size_t>(n), static_cast<std::size_t>(k))) > 1.96;
            const bool exact_sig = binomial_two_sided(n, k, 0.5) < kBinomialAlpha;
            if (z_sig != exact_sig) disagreements.push_back("(" + std::to_string(n) + "," + std::to_string(k) + ")");
        }
    if (!disagreements.empty()) {
        std::string list;
        for (const auto& d : disagreements) list += (list.empty() ? "" : " ") + d;
        o.check(false, "z-test and exact binomial disagree on " + std::to_string(disagreements.size()) +
                           " (n,k) pairs with n<=12: " + list);
    }
    check_runtime(o, t0, 10.0);
    if (o.pass) o.detail = "pearson oracle, bounds, z formula and binomial agreement all hold";
    return o;
}

Check criterion8() {
    Check o;
    std::mt19937_64 gen(8);
    std::uniform_int_distribution<int> d(0, 1500);
    std::vector<int> counts(1000);
    for (auto& c : counts) c = d(gen);
    double mean = 0.0;
    for (int c : counts) mean += c;
    mean /= static_cast<double>(counts.size());
    double ss = 0.0;
    for (int c : counts) ss += (c - mean) * (c - mean);
    const double sd = std::sqrt(ss / static_cast<double>(counts.size()));
    const auto s = length_stats(counts);
    o.check(std::fabs(s.mean_tokens - mean) <= kLengthTol, "mean differs from two-pass oracle");
    o.check(std::fabs(s.std_tokens - sd) <= kLengthTol, "std differs from two-pass oracle");
    o.check(format_mean_std(173.0, 42.6) == "173.0±42.6", "format gave " + format_mean_std(173.0, 42.6));
    LengthStats fixed;
    fixed.method = "soo_prefixing";
    fixed.n = 1;
    fixed.mean_tokens = 173.0;
    fixed.std_tokens = 42.6;
    o.check(length_table({fixed}, "L", "whitespace").rows[0][2] == "173.0±42.6", "length table cell");
    if (o.pass) o.detail = "Welford matches two-pass on 1000 counts; \"173.0±42.6\"";
    return o;
}

Check criterion9() {
    Check o;
    const auto t0 = Clock::now();
    const auto rs = synthetic_records(60);
    ModelClient client(std::make_shared<UniformChoiceMock>(true), {}, 0.0, 8);

    TempDir ref_dir;
    const auto reference = run_experiment(rs, Method::soo_prefix_others, client, run_options(ref_dir.path()));
    const auto ref_bytes = testsupport::read_file(reference[0].path);

    std::mt19937_64 gen(31337);
    std::uniform_int_distribution<std::size_t> kill(1, rs.size() - 1);
    int identical = 0;
    for (int trial = 0; trial < 20; ++trial) {
        TempDir dir;
        auto interrupted = run_options(dir.path());
        interrupted.stop_after_items = kill(gen);
        const auto partial = run_experiment(rs, Method::soo_prefix_others, client, interrupted);
        if (trial % 2 == 1) {
            // Half the trials also leave a torn final line.
            std::ofstream out(partial[0].path, std::ios::app | std::ios::binary);
            out << R"({"record_id":"syn-)" << trial << R"(","pred)";
        }
        const auto resumed = run_experiment(rs, Method::soo_prefix_others, client, run_options(dir.path()));
        if (testsupport::read_file(resumed[0].path) == ref_bytes) ++identical;
    }
    o.check(identical == 20, std::to_string(identical) + "/20 resumed logs byte-identical");
    check_runtime(o, t0, 30.0);
    if (o.pass) o.detail = "20/20 resumed logs byte-identical";
    return o;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(TOMEVAL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Check criterion10() {
    Check o;
    for (auto m : kAllMethods) {
        if (!is_prefixing(m)) continue;
        std::atomic<int> calls{0};
        auto backend = std::make_shared<FunctionBackend>(
            [&](const ChatRequest&, const GenParams&, const CallContext&) {
                ++calls;
                return BackendReply{"[A]"};
            },
            false, "no_prefill");
        ModelClient client(backend);
        TempDir dir;
        int code = 0;
        try {
            run_experiment({testsupport::ethan_record()}, m, client, run_options(dir / "runs"));
        } catch (const Error& e) {
            code = static_cast<int>(e.code());
        }
        o.check(code == 3, std::string(to_string(m)) + " exit code " + std::to_string(code));
        o.check(calls.load() == 0, std::string(to_string(m)) + " reached the backend");
        o.check(!std::filesystem::exists(dir / "runs"), std::string(to_string(m)) + " wrote output");
    }

    // Through the CLI against an unreachable http backend: the guard must fire first.
    TempDir dir;
    const auto out = dir / "cli_out";
    const int rc = run_cli("evaluate --config '" + (testsupport::samples_dir() / "config.json").string() +
                           "' --backend http_chat --base-url http://127.0.0.1:1 --supports-prefill false --out '" +
                           out.string() + "'");
    o.check(rc == 3, "CLI exit code " + std::to_string(rc));
    o.check(!std::filesystem::exists(out), "CLI wrote output");
    if (o.pass) o.detail = "4 prefixing methods and the CLI refuse with exit code 3, no calls, no files";
    return o;
}

std::optional<Check> criterion11() {
    const char* url = std::getenv("TOMEVAL_LIVE_BASE_URL");
    if (!url || !*url) return std::nullopt;
    Check o;
    BackendDescriptor d;
    d.kind = BackendKind::http_chat;
    d.name = "live";
    d.base_url = url;
    if (const char* m = std::getenv("TOMEVAL_LIVE_MODEL")) d.model = m;
    if (const char* k = std::getenv("TOMEVAL_LIVE_API_KEY_ENV")) d.api_key_env = k;
    if (const char* e = std::getenv("TOMEVAL_LIVE_EXTRA_BODY")) d.extra_body = nlohmann::json::parse(e);
    d.retry = RetryPolicy{3, std::chrono::milliseconds(1000), 2.0};
    try {
        ModelClient client(make_backend(d), d.retry);
        auto records = filter_records(testsupport::tomato_fixture(), FilterPolicy{}).kept;
        records.resize(std::min<std::size_t>(records.size(), 10));
        int good = 0;
        for (const auto& r : records) {
            const auto req = build_messages(r, Method::soo_prefixing);
            const auto c = client.generate(req, GenParams{}, CallContext{0, 1});
            if (c.raw_text.starts_with(*req.assistant_prefix) && extract_choice(c.raw_text) != Choice::unparseable)
                ++good;
        }
        o.check(good >= 8, std::to_string(good) + "/10 items prefixed and parseable");
        if (o.pass) o.detail = std::to_string(good) + "/10 items prefixed and parseable";
    } catch (const std::exception& e) {
        o.check(false, e.what());
    }
    return o;
}

} // namespace

int main() {
    const std::vector<std::function<Check()>> criteria{criterion1, criterion2, criterion3, criterion4, criterion5,
                                                         criterion6, criterion7, criterion8, criterion9, criterion10};
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Check o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        if (!o.pass) ++failed;
        std::cout << "criterion " << (i + 1) << ": " << (o.pass ? "PASS" : "FAIL") << " - " << o.detail << std::endl;
    }
    if (auto live = criterion11()) {
        if (!live->pass) ++failed;
        std::cout << "criterion 11: " << (live->pass ? "PASS" : "FAIL") << " - " << live->detail << std::endl;
    } else {
        std::cout << "criterion 11: SKIP - set TOMEVAL_LIVE_BASE_URL to run the live smoke test" << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
