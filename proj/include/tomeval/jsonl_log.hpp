#pragma once

// Append-only line-delimited logs: one header line, then one line per item. A torn
// final line (crash mid-write) is discarded when the log is reopened.

#include <cstdint>
#include <filesystem>
#include <iterator>
#include <optional>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tomeval/error.hpp"

namespace tomeval {

struct LogContents {
    std::optional<nlohmann::json> header;
    std::vector<nlohmann::json> items;
    // Bytes covered by complete, parseable lines.
    std::uintmax_t valid_bytes = 0;
};

inline LogContents read_jsonl_log(const std::filesystem::path& path) {
    LogContents out;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open log " + path.string());
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos < data.size()) {
        auto nl = data.find('\n', pos);
        if (nl == std::string::npos) break; // torn tail
        ++lineno;
        std::string_view line(data.data() + pos, nl - pos);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": corrupt log line: " + e.what());
        }
        if (!out.header) {
            if (j.value("type", "") != "header")
                throw Error(path.string() + ": first line is not a header");
            out.header = std::move(j);
        } else {
            out.items.push_back(std::move(j));
        }
        pos = nl + 1;
        out.valid_bytes = pos;
    }
    return out;
}

// Header fields that identify the experiment; everything except timestamps.
inline nlohmann::json header_identity(nlohmann::json header) {
    header.erase("created_at");
    return header;
}

class JsonlLogWriter {
public:
    // Opens path for appending. An existing log with the same identity is resumed and
    // its items returned through `existing`; a different identity is an error.
    JsonlLogWriter(const std::filesystem::path& path, nlohmann::json header,
                   std::vector<nlohmann::json>* existing = nullptr)
        : path_(path) {
        header["type"] = "header";
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        bool fresh = true;
        if (std::filesystem::exists(path)) {
            auto contents = read_jsonl_log(path);
            if (contents.header) {
                if (header_identity(*contents.header) != header_identity(header))
                    throw Error("log " + path.string() + " exists with a different header; refusing to overwrite");
                std::filesystem::resize_file(path, contents.valid_bytes);
                header_ = *contents.header;
                if (existing) *existing = std::move(contents.items);
                fresh = false;
            }
        }
        if (fresh) {
            out_.open(path, std::ios::binary | std::ios::trunc);
            if (!out_) throw Error("cannot write log " + path.string());
            header_ = header;
            out_ << header_.dump() << '\n';
            out_.flush();
        } else {
            out_.open(path, std::ios::binary | std::ios::app);
            if (!out_) throw Error("cannot append to log " + path.string());
        }
    }

    void append(nlohmann::json item) {
        item["type"] = "item";
        out_ << item.dump() << '\n';
        out_.flush();
        if (!out_) throw Error("write failed on " + path_.string());
    }

    const nlohmann::json& header() const { return header_; }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    nlohmann::json header_;
    std::ofstream out_;
};

} // namespace tomeval
