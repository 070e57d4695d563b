#include "kpi/text_encoding.hpp"

#include <cctype>
#include <cstdlib>

#include "kpi/rng.hpp"

#ifdef KPI_WITH_HTTP
#include <httplib.h>
#endif
#include <json.hpp>

namespace kpi::text {

std::vector<std::string> encoder_tokens(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

std::vector<Eigen::VectorXd> Encoder::encode_tokens(const std::string& text) const {
  auto toks = encoder_tokens(text);
  if (toks.empty()) {
    throw InvalidInput("encode_tokens: text is empty after normalization");
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(toks.size());
  for (const auto& tok : toks) out.push_back(token_vector(tok));
  return out;
}

Eigen::VectorXd Encoder::encode_text(const std::string& text) const {
  return mean_pool(encode_tokens(text));
}

HashEncoder::HashEncoder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) throw InvalidInput("HashEncoder: dimension must be positive");
}

Eigen::VectorXd HashEncoder::token_vector(const std::string& token) const {
  std::uint64_t state = seed_ ^ rng::fnv1a64(token);
  Eigen::VectorXd v(dim_);
  for (int i = 0; i < dim_; ++i) {
    // uniform in [-1, 1); unit-normalized below
    v[i] = static_cast<double>(rng::splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
  }
  double n = v.norm();
  if (n == 0.0) v[0] = 1.0, n = 1.0;  // unreachable in practice
  return v / n;
}

RemoteEncoder::RemoteEncoder(int dim, std::string endpoint, std::string credential_env)
    : dim_(dim), endpoint_(std::move(endpoint)), credential_env_(std::move(credential_env)) {
  if (dim <= 0) throw InvalidInput("RemoteEncoder: dimension must be positive");
  if (endpoint_.empty()) throw InvalidInput("RemoteEncoder: endpoint required");
}

Eigen::VectorXd RemoteEncoder::token_vector(const std::string& token) const {
#ifdef KPI_WITH_HTTP
  auto split = endpoint_.find('/', endpoint_.find("//") + 2);
  std::string host = endpoint_.substr(0, split);
  std::string path = split == std::string::npos ? "/" : endpoint_.substr(split);
  httplib::Client client(host);
  client.set_read_timeout(30, 0);
  httplib::Headers headers;
  if (!credential_env_.empty()) {
    if (const char* cred = std::getenv(credential_env_.c_str())) {
      headers.emplace("Authorization", std::string("Bearer ") + cred);
    }
  }
  nlohmann::json body{{"text", token}};
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res || res->status != 200) {
    throw EncoderUnavailable("encoder provider unreachable: " + endpoint_);
  }
  auto parsed = nlohmann::json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("embedding")) {
    throw EncoderUnavailable("encoder provider returned malformed response");
  }
  std::vector<double> values = parsed["embedding"].get<std::vector<double>>();
  if (static_cast<int>(values.size()) != dim_) {
    throw EncoderUnavailable("encoder provider returned wrong dimension");
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), dim_);
#else
  (void)token;
  throw EncoderUnavailable("external encoder support not built in");
#endif
}

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg) {
  if (cfg.kind == "deterministic-test") {
    return std::make_unique<HashEncoder>(cfg.dim);
  }
  if (cfg.kind == "external") {
    return std::make_unique<RemoteEncoder>(cfg.dim, cfg.endpoint, cfg.credential_env);
  }
  throw ConfigError("unknown encoder.kind: " + cfg.kind);
}

Eigen::VectorXd mean_pool(const std::vector<Eigen::VectorXd>& tokens) {
  if (tokens.empty()) throw InvalidInput("mean_pool: empty token list");
  Eigen::VectorXd acc = tokens[0];
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    if (tokens[i].size() != acc.size()) {
      throw InvalidInput("mean_pool: inconsistent dimensions");
    }
    acc += tokens[i];
  }
  return acc / static_cast<double>(tokens.size());
}

ad::Var gated_aggregate_t(ad::Tape& tape, const std::vector<ad::Var>& items,
                          ad::Var gate_weights) {
  if (items.empty()) throw InvalidInput("gated_aggregate: empty item list");
  ad::Var mean = tape.average(items);
  ad::Var mx = tape.cwise_max(items);
  ad::Var gate = tape.sigmoid(tape.matmul(gate_weights, mean));
  ad::Var ones = tape.leaf(ad::Mat::Ones(gate.rows(), 1));
  return tape.add(tape.cwise_mul(gate, mean),
                  tape.cwise_mul(tape.sub(ones, gate), mx));
}

Eigen::VectorXd gated_aggregate(const std::vector<Eigen::VectorXd>& items,
                                const Eigen::MatrixXd& gate_weights) {
  ad::Tape tape;
  std::vector<ad::Var> vars;
  vars.reserve(items.size());
  for (const auto& v : items) vars.push_back(tape.leaf(v));
  ad::Var out = gated_aggregate_t(tape, vars, tape.leaf(gate_weights));
  return out.value();
}

ad::Var adapter_apply_t(ad::Tape& tape, ad::Var base_vec, ad::Var adapter_weight,
                        ad::Var adapter_bias) {
  return tape.add(tape.matmul(adapter_weight, base_vec), adapter_bias);
}

}  // namespace kpi::text
