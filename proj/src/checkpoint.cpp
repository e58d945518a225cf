#include "xling/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "xling/digest.hpp"
#include "xling/error.hpp"

namespace xling {

namespace {

using nlohmann::json;

template <typename Tensor>
json encode_tensor(const Tensor& t) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(static_cast<std::size_t>(t.size()) * 8);
  // Row-major element order regardless of Eigen's storage order.
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      const auto bits = std::bit_cast<std::uint64_t>(static_cast<double>(t(i, j)));
      for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  }
  json shape = Tensor::ColsAtCompileTime == 1 ? json::array({t.rows()})
                                              : json::array({t.rows(), t.cols()});
  return json{{"shape", shape}, {"dtype", "f64"}, {"data", base64_encode(bytes)}};
}

template <typename Tensor>
void decode_tensor(const json& entry, const std::string& name, Tensor& t) {
  const auto& shape = entry.at("shape");
  const bool vector = Tensor::ColsAtCompileTime == 1;
  if (entry.at("dtype") != "f64" || shape.size() != (vector ? 1u : 2u) ||
      shape[0].get<Eigen::Index>() != t.rows() ||
      (!vector && shape[1].get<Eigen::Index>() != t.cols())) {
    throw DataError("checkpoint array '" + name + "' has unexpected shape or dtype");
  }
  const auto bytes = base64_decode(entry.at("data").get<std::string>());
  if (bytes.size() != static_cast<std::size_t>(t.size()) * 8) {
    throw DataError("checkpoint array '" + name + "' has wrong byte length");
  }
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= std::uint64_t{bytes[k++]} << (8 * b);
      t(i, j) = std::bit_cast<double>(bits);
    }
  }
}

json encode_arrays(const ModelParams<double>& params) {
  json arrays = json::object();
  for_each_tensor(
      [&](const std::string& name, ParamGroup, const auto& t) { arrays[name] = encode_tensor(t); },
      params);
  return arrays;
}

json dims_to_json(const ModelDims& d) {
  return json{{"vocab", d.vocab},       {"dim", d.dim},
              {"classes", d.classes},   {"voters", d.voters},
              {"base_hidden", d.base_hidden}, {"hidden_step", d.hidden_step}};
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::base: return "base";
    case Stage::finetuned: return "finetuned";
    case Stage::soft: return "soft";
    case Stage::hard: return "hard";
  }
  return "unknown";
}

Stage parse_stage(const std::string& text) {
  for (Stage s : {Stage::base, Stage::finetuned, Stage::soft, Stage::hard}) {
    if (to_string(s) == text) return s;
  }
  throw DataError("unknown checkpoint stage '" + text + "'");
}

std::string params_digest(const ModelParams<double>& params) {
  return sha256_hex(encode_arrays(params).dump());
}

void save_checkpoint(const ModelParams<double>& params, const Vocab& vocab,
                     const CheckpointMetadata& metadata, const std::filesystem::path& path) {
  if (params.dims.vocab != vocab.size()) {
    throw DataError("checkpoint vocabulary size does not match the embedding table");
  }
  json arrays = encode_arrays(params);
  json envelope;
  envelope["format_version"] = kCheckpointFormatVersion;
  envelope["metadata"] = {{"stage", to_string(metadata.stage)},
                          {"round", metadata.round},
                          {"seed", metadata.seed},
                          {"config_hash", metadata.config_hash},
                          {"dims", dims_to_json(params.dims)}};
  envelope["vocab"] = vocab.tokens();
  envelope["checksum"] = sha256_hex(arrays.dump());
  envelope["arrays"] = std::move(arrays);

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint " + tmp.string());
    out << envelope.dump() << '\n';
    if (!out) throw DataError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();

  json envelope;
  try {
    envelope = json::parse(buffer.str());
  } catch (const json::exception&) {
    throw DataError("checkpoint " + path.string() + " is truncated or not valid JSON");
  }
  try {
    const int version = envelope.at("format_version").get<int>();
    if (version != kCheckpointFormatVersion) {
      throw DataError("checkpoint " + path.string() + " has format_version " +
                      std::to_string(version) + "; this build reads version " +
                      std::to_string(kCheckpointFormatVersion));
    }
    const json& arrays = envelope.at("arrays");
    if (sha256_hex(arrays.dump()) != envelope.at("checksum").get<std::string>()) {
      throw DataError("checkpoint " + path.string() + " failed its checksum");
    }
    const json& meta = envelope.at("metadata");
    const json& d = meta.at("dims");
    ModelDims dims{d.at("vocab").get<std::size_t>(),   d.at("dim").get<std::size_t>(),
                   d.at("classes").get<std::size_t>(), d.at("voters").get<std::size_t>(),
                   d.at("base_hidden").get<std::size_t>(),
                   d.at("hidden_step").get<std::size_t>()};

    Checkpoint ckpt{ModelParams<double>::zeros(dims),
                    Vocab(envelope.at("vocab").get<std::vector<std::string>>()),
                    {parse_stage(meta.at("stage").get<std::string>()), meta.at("round").get<int>(),
                     meta.at("seed").get<std::uint64_t>(),
                     meta.at("config_hash").get<std::string>()}};
    if (ckpt.vocab.size() != dims.vocab) {
      throw DataError("checkpoint vocabulary does not match its dims");
    }
    for_each_tensor(
        [&](const std::string& name, ParamGroup, auto& t) {
          if (!arrays.contains(name)) throw DataError("checkpoint lacks array '" + name + "'");
          decode_tensor(arrays[name], name, t);
        },
        ckpt.params);
    return ckpt;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path.string() + " is malformed: " + e.what());
  }
}

}  // namespace xling
