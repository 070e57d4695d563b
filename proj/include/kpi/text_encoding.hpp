#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "kpi/autodiff.hpp"
#include "kpi/errors.hpp"

namespace kpi::text {

// Lowercased alphanumeric tokens; the encoder keeps everything, the
// TF-IDF tokenizer (keywords module) applies its own filtering.
std::vector<std::string> encoder_tokens(const std::string& text);

struct EncoderConfig {
  std::string kind = "deterministic-test";  // or "external"
  int dim = 64;
  std::string endpoint;        // external provider only
  std::string credential_env;  // name of env var holding the API key
};

// A frozen sentence/token encoder. Frozen handles never change their
// output for a fixed input within a build.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual int dim() const = 0;
  virtual std::string kind() const = 0;

  // one vector per token; InvalidInput if text is empty after
  // whitespace normalization
  std::vector<Eigen::VectorXd> encode_tokens(const std::string& text) const;

  // mean-pooled token vectors
  Eigen::VectorXd encode_text(const std::string& text) const;

 protected:
  virtual Eigen::VectorXd token_vector(const std::string& token) const = 0;
};

// Seeded hash-of-token unit vectors; deterministic and distinct for
// distinct tokens. This is the offline/CI provider.
class HashEncoder : public Encoder {
 public:
  explicit HashEncoder(int dim, std::uint64_t seed = 0x6b7069656e63ull);
  int dim() const override { return dim_; }
  std::string kind() const override { return "deterministic-test"; }

 protected:
  Eigen::VectorXd token_vector(const std::string& token) const override;

 private:
  int dim_;
  std::uint64_t seed_;
};

// External provider behind the same interface; one HTTP call per token.
class RemoteEncoder : public Encoder {
 public:
  RemoteEncoder(int dim, std::string endpoint, std::string credential_env);
  int dim() const override { return dim_; }
  std::string kind() const override { return "frozen"; }

 protected:
  Eigen::VectorXd token_vector(const std::string& token) const override;

 private:
  int dim_;
  std::string endpoint_;
  std::string credential_env_;
};

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg);

// Arithmetic mean per coordinate; InvalidInput on empty or ragged input.
Eigen::VectorXd mean_pool(const std::vector<Eigen::VectorXd>& tokens);

// Learned convex blend of mean and coordinate-wise max pooling:
//   sigma(W_g m) .* m + (1 - sigma(W_g m)) .* x   with m = mean, x = max
ad::Var gated_aggregate_t(ad::Tape& tape, const std::vector<ad::Var>& items,
                          ad::Var gate_weights);
Eigen::VectorXd gated_aggregate(const std::vector<Eigen::VectorXd>& items,
                                const Eigen::MatrixXd& gate_weights);

// Trainable encoder f: frozen base followed by a linear adapter whose
// parameters live in the model state. The adapter commutes with mean
// pooling, so sentence-level vectors can be adapted after pooling.
ad::Var adapter_apply_t(ad::Tape& tape, ad::Var base_vec, ad::Var adapter_weight,
                        ad::Var adapter_bias);

}  // namespace kpi::text
