#include "kpi/model_state.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kpi/rng.hpp"

namespace kpi::model {

namespace {

using nlohmann::json;

Eigen::MatrixXd gaussian(rng::Stream& rng, long rows, long cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = rng.normal() * scale;
  return m;
}

}  // namespace

ModelState ModelState::init(const Hyper& hyper, const DataSchema& schema,
                            const std::string& corpus_hash) {
  const int d = hyper.dim;
  if (d <= 0 || d % kRetrievalHeads != 0 || d % kSegmentHeads != 0) {
    throw ConfigError("encoder.dim must be a positive multiple of " +
                      std::to_string(kRetrievalHeads));
  }
  if (schema.gender_categories.empty()) {
    throw ConfigError("model init needs at least one gender category");
  }
  ModelState s;
  s.hyper = hyper;
  s.schema = schema;
  s.corpus_hash = corpus_hash;

  rng::Stream rng(hyper.seed, "init");
  const double ws = 1.0 / std::sqrt(static_cast<double>(d));

  s.params_["adapter.weight"] = Eigen::MatrixXd::Identity(d, d);
  s.params_["adapter.bias"] = Eigen::MatrixXd::Zero(d, 1);
  s.params_["gate.keywords"] = Eigen::MatrixXd::Zero(d, d);
  s.params_["gate.sentences"] = Eigen::MatrixXd::Zero(d, d);

  Eigen::MatrixXd beta(1, 1);
  beta(0, 0) = hyper.beta_init;
  s.params_["retrieval.beta"] = beta;
  const int dr = d / kRetrievalHeads;
  for (int h = 0; h < kRetrievalHeads; ++h) {
    s.params_["retrieval.wq.h" + std::to_string(h)] = gaussian(rng, dr, d, ws);
    s.params_["retrieval.wk.h" + std::to_string(h)] = gaussian(rng, dr, d, ws);
  }

  s.params_["gat.l1.weight"] = gaussian(rng, d, d, ws);
  s.params_["gat.l1.attn_src"] = gaussian(rng, d, 1, 0.1 * ws);
  s.params_["gat.l1.attn_dst"] = gaussian(rng, d, 1, 0.1 * ws);
  s.params_["gat.l2.weight"] = gaussian(rng, d, d, ws);
  s.params_["gat.l2.attn_src"] = gaussian(rng, d, 1, 0.1 * ws);
  s.params_["gat.l2.attn_dst"] = gaussian(rng, d, 1, 0.1 * ws);
  s.params_["gat.proj.w1"] = gaussian(rng, d, d, ws);
  s.params_["gat.proj.w2"] = gaussian(rng, d, d, ws);

  s.params_["demo.gender"] =
      gaussian(rng, static_cast<long>(schema.gender_categories.size()), d, 0.1);
  s.params_["demo.age"] = gaussian(rng, kAgeBuckets, d, 0.1);

  const int ds = d / kSegmentHeads;
  for (const std::string block : {"pe.seg", "pe.fuse"}) {
    for (int h = 0; h < kSegmentHeads; ++h) {
      s.params_[block + ".wq.h" + std::to_string(h)] = gaussian(rng, ds, d, ws);
      s.params_[block + ".wk.h" + std::to_string(h)] = gaussian(rng, ds, d, ws);
      s.params_[block + ".wv.h" + std::to_string(h)] = gaussian(rng, ds, d, ws);
    }
    s.params_[block + ".wout"] = gaussian(rng, d, d, ws);
  }
  s.params_["pe.seg.ln_gain"] = Eigen::MatrixXd::Ones(3 * d, 1);
  s.params_["pe.seg.ln_bias"] = Eigen::MatrixXd::Zero(3 * d, 1);
  s.params_["pe.fuse.squash"] = gaussian(rng, d, 3 * d, 1.0 / std::sqrt(3.0 * d));
  s.params_["pe.fuse.ln_gain"] = Eigen::MatrixXd::Ones(2 * d, 1);
  s.params_["pe.fuse.ln_bias"] = Eigen::MatrixXd::Zero(2 * d, 1);
  s.params_["pe.out.weight"] = gaussian(rng, d, 2 * d, 1.0 / std::sqrt(2.0 * d));

  if (hyper.prototype_mode == "random") {
    if (schema.labels.empty()) {
      throw ConfigError("random prototype mode needs the label list");
    }
    s.params_["prototypes.free"] =
        gaussian(rng, static_cast<long>(schema.labels.size()), d, 1.0);
  } else if (hyper.prototype_mode != "graph") {
    throw ConfigError("unknown prototype_mode: " + hyper.prototype_mode);
  }
  return s;
}

Eigen::MatrixXd& ModelState::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidInput("unknown parameter: " + name);
  return it->second;
}

const Eigen::MatrixXd& ModelState::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidInput("unknown parameter: " + name);
  return it->second;
}

int ModelState::gender_index(const std::string& gender) const {
  auto it = std::find(schema.gender_categories.begin(), schema.gender_categories.end(),
                      gender);
  if (it == schema.gender_categories.end()) {
    throw UnknownCategory("unknown gender category: " + gender);
  }
  return static_cast<int>(it - schema.gender_categories.begin());
}

int ModelState::label_index(const std::string& label) const {
  auto it = std::find(schema.labels.begin(), schema.labels.end(), label);
  if (it == schema.labels.end()) {
    throw UnknownDisease("label not in prototype set: " + label);
  }
  return static_cast<int>(it - schema.labels.begin());
}

namespace {
constexpr char kMagic[8] = {'K', 'P', 'I', 'C', 'K', 'P', 'T', '1'};
}

std::string ModelState::serialize() const {
  std::ostringstream out(std::ios::binary);
  out.write(kMagic, sizeof(kMagic));

  json header;
  header["hyper"] = {{"dim", hyper.dim},
                     {"tau", hyper.tau},
                     {"lambda", hyper.lambda},
                     {"learning_rate", hyper.learning_rate},
                     {"epochs", hyper.epochs},
                     {"batch_size", hyper.batch_size},
                     {"seed", hyper.seed},
                     {"theta", hyper.theta},
                     {"delta", hyper.delta},
                     {"beta_init", hyper.beta_init},
                     {"prototype_mode", hyper.prototype_mode}};
  header["schema"] = {{"gender_categories", schema.gender_categories},
                      {"clinical_fields", schema.clinical_fields},
                      {"labels", schema.labels}};
  header["corpus_hash"] = corpus_hash;
  std::string htext = header.dump();
  std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));

  std::uint64_t count = params_.size();
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& [name, mat] : params_) {
    std::uint64_t nlen = name.size();
    out.write(reinterpret_cast<const char*>(&nlen), sizeof(nlen));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    std::uint64_t rows = static_cast<std::uint64_t>(mat.rows());
    std::uint64_t cols = static_cast<std::uint64_t>(mat.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    out.write(reinterpret_cast<const char*>(mat.data()),
              static_cast<std::streamsize>(sizeof(double) * mat.size()));
  }
  return out.str();
}

ModelState ModelState::deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint");
  }
  auto read_u64 = [&in]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("checkpoint truncated");
    return v;
  };
  std::uint64_t hlen = read_u64();
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("checkpoint truncated");
  json header = json::parse(htext);

  ModelState s;
  const json& h = header.at("hyper");
  s.hyper.dim = h.at("dim").get<int>();
  s.hyper.tau = h.at("tau").get<double>();
  s.hyper.lambda = h.at("lambda").get<double>();
  s.hyper.learning_rate = h.at("learning_rate").get<double>();
  s.hyper.epochs = h.at("epochs").get<int>();
  s.hyper.batch_size = h.at("batch_size").get<int>();
  s.hyper.seed = h.at("seed").get<std::uint64_t>();
  s.hyper.theta = h.at("theta").get<double>();
  s.hyper.delta = h.at("delta").get<double>();
  s.hyper.beta_init = h.at("beta_init").get<double>();
  s.hyper.prototype_mode = h.at("prototype_mode").get<std::string>();
  const json& sc = header.at("schema");
  s.schema.gender_categories = sc.at("gender_categories").get<std::vector<std::string>>();
  s.schema.clinical_fields = sc.at("clinical_fields").get<std::vector<std::string>>();
  s.schema.labels = sc.at("labels").get<std::vector<std::string>>();
  s.corpus_hash = header.at("corpus_hash").get<std::string>();

  std::uint64_t count = read_u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    std::uint64_t nlen = read_u64();
    std::string name(nlen, '\0');
    in.read(name.data(), static_cast<std::streamsize>(nlen));
    std::uint64_t rows = read_u64();
    std::uint64_t cols = read_u64();
    Eigen::MatrixXd mat(static_cast<long>(rows), static_cast<long>(cols));
    in.read(reinterpret_cast<char*>(mat.data()),
            static_cast<std::streamsize>(sizeof(double) * rows * cols));
    if (!in) throw IoError("checkpoint truncated");
    s.params_[name] = std::move(mat);
  }
  return s;
}

void ModelState::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

ModelState ModelState::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

std::string ModelState::checkpoint_id() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(rng::fnv1a64(serialize())));
  return std::string(buf);
}

}  // namespace kpi::model
