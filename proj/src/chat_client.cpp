#include "kpi/chat_client.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "kpi/rng.hpp"

#ifdef KPI_WITH_HTTP
#include <httplib.h>
#include <json.hpp>
#endif

namespace kpi::kg {

namespace fs = std::filesystem;

RecordedMockClient::RecordedMockClient(std::string transcript_dir)
    : dir_(std::move(transcript_dir)) {
  if (!fs::is_directory(dir_)) {
    throw ExtractionUnavailable("transcript directory not found: " + dir_);
  }
}

std::string RecordedMockClient::transcript_name(const std::string& prompt) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rng::fnv1a64(prompt)));
  return std::string(buf) + ".txt";
}

std::string RecordedMockClient::complete(const std::string& prompt) {
  fs::path p = fs::path(dir_) / transcript_name(prompt);
  std::ifstream in(p, std::ios::binary);
  if (!in) {
    throw ExtractionUnavailable("no recorded transcript for prompt: " + p.string());
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

LiveChatClient::LiveChatClient(ClientConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.endpoint.empty()) {
    throw ExtractionUnavailable("live client requires an endpoint");
  }
}

std::string LiveChatClient::complete(const std::string& prompt) {
#ifdef KPI_WITH_HTTP
  using namespace std::chrono;
  // crude rate limit: space requests evenly across the minute
  if (cfg_.rate_limit_per_minute > 0) {
    long long min_gap = 60000 / cfg_.rate_limit_per_minute;
    long long now = duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
    if (last_request_ms_ != 0 && now - last_request_ms_ < min_gap) {
      std::this_thread::sleep_for(milliseconds(min_gap - (now - last_request_ms_)));
    }
    last_request_ms_ = duration_cast<milliseconds>(steady_clock::now().time_since_epoch()).count();
  }

  auto split = cfg_.endpoint.find('/', cfg_.endpoint.find("//") + 2);
  std::string host = cfg_.endpoint.substr(0, split);
  std::string path = split == std::string::npos ? "/" : cfg_.endpoint.substr(split);

  int delay_ms = 500;
  for (int attempt = 0; attempt < std::max(1, cfg_.max_retries); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(milliseconds(delay_ms));
      delay_ms *= 2;
    }
    httplib::Client client(host);
    client.set_read_timeout(60, 0);
    httplib::Headers headers;
    if (!cfg_.credential_env.empty()) {
      if (const char* cred = std::getenv(cfg_.credential_env.c_str())) {
        headers.emplace("Authorization", std::string("Bearer ") + cred);
      }
    }
    nlohmann::json body{{"prompt", prompt}};
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res || res->status != 200) continue;
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("text")) continue;
    return parsed["text"].get<std::string>();
  }
  throw ExtractionUnavailable("chat completion failed after retries: " + cfg_.endpoint);
#else
  (void)prompt;
  throw ExtractionUnavailable("live chat client support not built in");
#endif
}

std::unique_ptr<ChatClient> make_client(const ClientConfig& cfg) {
  if (cfg.mode == "offline") return nullptr;
  if (cfg.mode == "mock") return std::make_unique<RecordedMockClient>(cfg.transcript_dir);
  if (cfg.mode == "live") return std::make_unique<LiveChatClient>(cfg);
  throw ConfigError("unknown client.mode: " + cfg.mode);
}

}  // namespace kpi::kg
