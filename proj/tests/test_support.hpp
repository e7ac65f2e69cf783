#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tomeval/corpus.hpp"
#include "tomeval/model_client.hpp"

namespace testsupport {

inline std::filesystem::path source_dir() { return TOMEVAL_SOURCE_DIR; }
inline std::filesystem::path samples_dir() { return source_dir() / "samples"; }
inline std::filesystem::path goldens_dir() { return source_dir() / "goldens"; }
inline std::filesystem::path data_dir() { return source_dir() / "tests" / "data"; }

inline std::vector<tomeval::QuestionRecord> tomato_fixture() {
    return tomeval::load_dataset((samples_dir() / "tomato_fixture.jsonl").string(), tomeval::Benchmark::tomato);
}

inline std::vector<tomeval::QuestionRecord> tombench_fixture() {
    return tomeval::load_dataset((samples_dir() / "tombench_fixture.jsonl").string(), tomeval::Benchmark::tombench);
}

inline tomeval::QuestionRecord find_record(const std::vector<tomeval::QuestionRecord>& rs, const std::string& id) {
    for (const auto& r : rs)
        if (r.id == id) return r;
    throw std::runtime_error("fixture record not found: " + id);
}

inline tomeval::QuestionRecord ethan_record() { return find_record(tomato_fixture(), "tomato-ethan"); }
inline tomeval::QuestionRecord sara_record() { return find_record(tombench_fixture(), "tombench-sara"); }

// Scripted text for (record_id, method) from the sample mock script.
inline std::string scripted_text(const std::string& record_id, const std::string& method) {
    std::ifstream in(samples_dir() / "mock_script.jsonl");
    std::string line;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        if (j["record_id"] == record_id && j["method"] == method) return j["text"].get<std::string>();
    }
    throw std::runtime_error("no scripted text for " + record_id + "/" + method);
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("tomeval_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

// Synthetic record for fixtures that need many items.
inline tomeval::QuestionRecord synthetic_record(int i, tomeval::Category c = tomeval::Category::belief,
                                                int answer = 0) {
    tomeval::QuestionRecord r;
    r.id = "syn-" + std::to_string(i);
    r.benchmark = tomeval::Benchmark::tomato;
    r.context = "Mia: \"Where are my keys?\"\nNoah: \"On the table.\"";
    r.question = "Where does Mia think the keys are?";
    r.options = {"On the table", "In the car", "In her bag", "At work"};
    r.answer_index = answer;
    r.category = c;
    r.target_name = "Mia";
    return r;
}

} // namespace testsupport
