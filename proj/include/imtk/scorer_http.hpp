#pragma once

#include <cstdlib>
#include <string>

#include "imtk/moderation.hpp"

#include <httplib.h>
#include <json.hpp>

namespace imtk {

// HTTP client for a Perspective-style scoring service.
//
// Wire contract:
//   request  POST <path>  {"text": ..., "attributes": ["toxicity", "insult",
//            "identity_attack"]}
//   response 200          {"toxicity": x, "insult": y, "identity_attack": z}
//
// The API key is read from the environment variable named in the
// configuration (never from config files) and sent as a `key` query
// parameter. 5xx responses and connection failures are transient; 429 is
// transient and rate-limited; other 4xx are permanent.
class HttpScorerClient : public ScorerClient {
public:
    HttpScorerClient(const std::string& endpoint, const std::string& api_key_env = "")
        : endpoint_(endpoint) {
        auto scheme_end = endpoint.find("://");
        auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto path_start = endpoint.find('/', host_start);
        host_ = endpoint.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : endpoint.substr(path_start);
        if (!api_key_env.empty()) {
            const char* key = std::getenv(api_key_env.c_str());
            if (key != nullptr) api_key_ = key;
        }
    }

    std::string name() const override { return "http"; }

    ToxicityScores score(const std::string& text) override {
        nlohmann::json request;
        request["text"] = text;
        request["attributes"] = toxicity_attributes();

        httplib::Client client(host_);
        client.set_connection_timeout(10);
        client.set_read_timeout(30);

        std::string path = path_;
        if (!api_key_.empty())
            path += (path.find('?') == std::string::npos ? "?key=" : "&key=") + api_key_;

        auto res = client.Post(path, request.dump(), "application/json");
        if (!res)
            throw ScoringError("connection to " + endpoint_ + " failed", /*transient=*/true);
        if (res->status == 429)
            throw ScoringError("rate limited by service", /*transient=*/true,
                               /*rate_limited=*/true);
        if (res->status >= 500)
            throw ScoringError("service error " + std::to_string(res->status),
                               /*transient=*/true);
        if (res->status != 200)
            throw ScoringError("request rejected with status " + std::to_string(res->status),
                               /*transient=*/false);

        try {
            auto j = nlohmann::json::parse(res->body);
            ToxicityScores scores{j.at("toxicity").get<double>(),
                                  j.at("insult").get<double>(),
                                  j.at("identity_attack").get<double>()};
            scores.validate();
            return scores;
        } catch (const std::exception& e) {
            throw ScoringError(std::string("malformed response: ") + e.what(),
                               /*transient=*/false);
        }
    }

private:
    std::string endpoint_;
    std::string host_;
    std::string path_;
    std::string api_key_;
};

}  // namespace imtk
