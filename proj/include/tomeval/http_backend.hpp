#pragma once

// OpenAI-compatible chat-completions backend.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "tomeval/error.hpp"
#include "tomeval/model_client.hpp"

namespace tomeval {

inline nlohmann::json chat_request_body(const ChatRequest& request, const GenParams& params,
                                        const BackendDescriptor& desc) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages()) messages.push_back({{"role", m.role}, {"content", m.content}});
    nlohmann::json body;
    if (!desc.model.empty()) body["model"] = desc.model;
    body["messages"] = messages;
    body["temperature"] = params.sampling_enabled ? params.temperature : 0.0;
    body["top_p"] = params.top_p;
    body["max_tokens"] = params.max_new_tokens;
    if (params.seed) body["seed"] = *params.seed;
    for (const auto& [k, v] : desc.extra_body.items()) body[k] = v;
    return body;
}

class HttpChatBackend : public Backend {
public:
    explicit HttpChatBackend(BackendDescriptor desc) : desc_(std::move(desc)) {
        if (desc_.base_url.empty()) {
            if (const char* env = std::getenv("TOMEVAL_BASE_URL")) desc_.base_url = env;
        }
        if (desc_.base_url.empty()) throw ConfigError("http_chat backend needs a base_url (or TOMEVAL_BASE_URL)");
        if (!desc_.api_key_env.empty()) {
            if (const char* key = std::getenv(desc_.api_key_env.c_str())) api_key_ = key;
        }
    }

    BackendReply complete(const ChatRequest& request, const GenParams& params, const CallContext&) override {
        httplib::Client client(desc_.base_url);
        client.set_connection_timeout(10);
        client.set_read_timeout(desc_.timeout_seconds);
        client.set_write_timeout(desc_.timeout_seconds);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        const auto body = chat_request_body(request, params, desc_).dump();
        auto res = client.Post(desc_.path, headers, body, "application/json");
        if (!res) throw TransientError("request to " + desc_.base_url + " failed: " + httplib::to_string(res.error()));
        if (res->status == 429 || res->status >= 500)
            throw TransientError("HTTP " + std::to_string(res->status) + " from " + desc_.base_url);
        if (res->status != 200)
            throw MalformedResponse("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));

        try {
            auto j = nlohmann::json::parse(res->body);
            const auto& choice = j.at("choices").at(0);
            BackendReply reply;
            const auto& content = choice.at("message").at("content");
            reply.text = content.is_null() ? std::string() : content.get<std::string>();
            if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
                reply.finish_reason = choice["finish_reason"].get<std::string>();
            return reply;
        } catch (const nlohmann::json::exception& e) {
            throw MalformedResponse(std::string("unexpected response body: ") + e.what());
        }
    }

    bool supports_prefill() const override { return desc_.supports_prefill; }
    std::string id() const override { return desc_.id() + "@" + desc_.base_url + "/" + desc_.model; }
    bool is_mock() const override { return false; }

private:
    BackendDescriptor desc_;
    std::string api_key_;
};

inline std::shared_ptr<Backend> make_backend(const BackendDescriptor& desc) {
    switch (desc.kind) {
    case BackendKind::http_chat: return std::make_shared<HttpChatBackend>(desc);
    case BackendKind::scripted_mock: {
        if (desc.script_path.empty()) throw ConfigError("scripted_mock backend needs script_path");
        auto mock = std::make_shared<ScriptedMock>(ScriptedMock::from_file(desc.script_path));
        mock->set_supports_prefill(desc.supports_prefill);
        return mock;
    }
    case BackendKind::uniform_choice_mock: return std::make_shared<UniformChoiceMock>(desc.supports_prefill);
    }
    throw ConfigError("unknown backend kind");
}

} // namespace tomeval
