#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fairsyn/error.hpp"

namespace fairsyn {

struct ChatMessage {
  std::string role;
  std::string content;
};

struct CompletionRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  std::size_t max_tokens = 2048;
  std::size_t n = 1;

  nlohmann::json to_json() const {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) {
      msgs.push_back({{"role", m.role}, {"content", m.content}});
    }
    return nlohmann::json{{"model", model},
                          {"messages", msgs},
                          {"temperature", temperature},
                          {"max_tokens", max_tokens},
                          {"n", n}};
  }
};

struct CompletionResponse {
  std::vector<std::string> contents;  // choices[*].message.content
};

class CompletionTransport {
 public:
  virtual ~CompletionTransport() = default;
  virtual CompletionResponse complete(const CompletionRequest& req) = 0;
  virtual std::string name() const = 0;
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string request_hash(const CompletionRequest& req) {
  const std::uint64_t h = fnv1a64(req.to_json().dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Offline transport: completions come from canned text files in a directory.
// A request is served by <hash>.txt (hash of its canonical JSON), falling
// back to default.txt. Within a file, completions are separated by a line
// containing exactly "==="; if the file holds fewer than n completions the
// last one is repeated.
class MockTransport final : public CompletionTransport {
 public:
  explicit MockTransport(std::filesystem::path dir) : dir_(std::move(dir)) {}

  CompletionResponse complete(const CompletionRequest& req) override {
    namespace fs = std::filesystem;
    fs::path file = dir_ / (request_hash(req) + ".txt");
    if (!fs::exists(file)) file = dir_ / "default.txt";
    std::ifstream in(file);
    if (!in) {
      throw TransportError("mock transport has no completion file for this request (" +
                           file.string() + ")");
    }
    std::vector<std::string> parts{""};
    std::string line;
    bool first_line = true;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line == "===") {
        parts.emplace_back();
        first_line = true;
        continue;
      }
      if (!first_line) parts.back() += '\n';
      parts.back() += line;
      first_line = false;
    }
    CompletionResponse resp;
    for (std::size_t i = 0; i < req.n; ++i) {
      resp.contents.push_back(i < parts.size() ? parts[i] : parts.back());
    }
    return resp;
  }

  std::string name() const override { return "mock"; }

 private:
  std::filesystem::path dir_;
};

struct HttpEndpoint {
  std::string host;
  int port = 80;
  std::string path = "/v1/chat/completions";
};

inline HttpEndpoint parse_endpoint(const std::string& url) {
  HttpEndpoint ep;
  std::string rest = url;
  const std::string http = "http://";
  const std::string https = "https://";
  if (rest.rfind(https, 0) == 0) {
    throw ConfigError("https endpoints are not supported; use an http proxy");
  }
  if (rest.rfind(http, 0) == 0) rest = rest.substr(http.size());
  const auto slash = rest.find('/');
  std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
  if (slash != std::string::npos) ep.path = rest.substr(slash);
  const auto colon = hostport.find(':');
  if (colon != std::string::npos) {
    ep.host = hostport.substr(0, colon);
    ep.port = std::stoi(hostport.substr(colon + 1));
  } else {
    ep.host = hostport;
  }
  if (ep.host.empty()) throw ConfigError("endpoint url has no host: " + url);
  return ep;
}

// Chat-completion client for an OpenAI-style endpoint. The API key is read
// from the environment variable named in the config and sent as a bearer
// token; an empty variable name disables the header.
class HttpTransport final : public CompletionTransport {
 public:
  HttpTransport(std::string endpoint_url, std::string api_key_env,
                std::size_t timeout_seconds = 60)
      : url_(std::move(endpoint_url)),
        api_key_env_(std::move(api_key_env)),
        timeout_seconds_(timeout_seconds) {}

  CompletionResponse complete(const CompletionRequest& req) override;

  std::string name() const override { return "http"; }

 private:
  std::string url_;
  std::string api_key_env_;
  std::size_t timeout_seconds_;
};

inline CompletionResponse parse_completion_response(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw MalformedResponseError("response body is not JSON");
  }
  if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
    throw MalformedResponseError("response has no choices");
  }
  CompletionResponse resp;
  for (const auto& c : j["choices"]) {
    if (!c.contains("message") || !c["message"].contains("content") ||
        !c["message"]["content"].is_string()) {
      throw MalformedResponseError("choice lacks message.content");
    }
    resp.contents.push_back(c["message"]["content"].get<std::string>());
  }
  return resp;
}

}  // namespace fairsyn

// httplib pulls in platform socket headers; keep it out of the main include
// block so the common offline path stays lightweight.
#include <httplib.h>

namespace fairsyn {

inline CompletionResponse HttpTransport::complete(const CompletionRequest& req) {
  const HttpEndpoint ep = parse_endpoint(url_);
  httplib::Client client(ep.host, ep.port);
  client.set_connection_timeout(static_cast<time_t>(timeout_seconds_), 0);
  client.set_read_timeout(static_cast<time_t>(timeout_seconds_), 0);
  httplib::Headers headers;
  if (!api_key_env_.empty()) {
    const char* key = std::getenv(api_key_env_.c_str());
    if (key == nullptr || *key == '\0') {
      throw ConfigError("environment variable '" + api_key_env_ + "' is not set");
    }
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  const auto res = client.Post(ep.path, headers, req.to_json().dump(), "application/json");
  if (!res) {
    std::ostringstream oss;
    oss << "request to " << url_ << " failed: " << httplib::to_string(res.error());
    throw TransportError(oss.str());
  }
  if (res->status < 200 || res->status >= 300) {
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status));
  }
  return parse_completion_response(res->body);
}

}  // namespace fairsyn
