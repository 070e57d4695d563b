#pragma once

#include <memory>
#include <string>

#include "kpi/errors.hpp"

namespace kpi::kg {

struct ClientConfig {
  std::string mode = "offline";  // live | mock | offline
  std::string transcript_dir;
  std::string endpoint;
  std::string credential_env;
  int max_retries = 3;
  int rate_limit_per_minute = 60;
};

// Chat-completion provider. complete() either returns the model text or
// throws ExtractionUnavailable once retries are exhausted.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string kind() const = 0;
};

// Replays byte-identical transcripts from <dir>/<fnv1a64(prompt) hex>.txt.
class RecordedMockClient : public ChatClient {
 public:
  explicit RecordedMockClient(std::string transcript_dir);
  std::string complete(const std::string& prompt) override;
  std::string kind() const override { return "recorded-mock"; }

  static std::string transcript_name(const std::string& prompt);

 private:
  std::string dir_;
};

class LiveChatClient : public ChatClient {
 public:
  explicit LiveChatClient(ClientConfig cfg);
  std::string complete(const std::string& prompt) override;
  std::string kind() const override { return "live"; }

 private:
  ClientConfig cfg_;
  long long last_request_ms_ = 0;
};

// nullptr means offline mode (rule-based extraction, template definitions)
std::unique_ptr<ChatClient> make_client(const ClientConfig& cfg);

}  // namespace kpi::kg
