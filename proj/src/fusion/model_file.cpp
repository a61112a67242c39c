#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sentinel/errors.h"
#include "sentinel/fusion.h"

namespace sentinel::fusion {
namespace {

using nlohmann::json;

json flatten(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

json flatten(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

const json& field(const json& doc, const char* name) {
  const auto it = doc.find(name);
  if (it == doc.end()) throw ParseError(std::string("model file: missing field `") + name + "`");
  return *it;
}

std::size_t size_field(const json& doc, const char* name) {
  const json& v = field(doc, name);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    throw ParseError(std::string("model file: `") + name + "` must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

void read_into(const json& doc, const char* name, double* out, std::size_t count) {
  const json& arr = field(doc, name);
  if (!arr.is_array() || arr.size() != count) {
    throw ParseError(std::string("model file: `") + name + "` must hold " +
                     std::to_string(count) + " numbers");
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (!arr[i].is_number()) {
      throw ParseError(std::string("model file: `") + name + "` contains a non-number");
    }
    out[i] = arr[i].get<double>();
  }
}

}  // namespace

std::string serialize_params(const FusionHeadParams& params) {
  params.head.check();
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["d"] = params.embedding_dim;
  doc["n_heur"] = params.heuristic_dim;
  doc["hidden"] = params.head.hidden();
  doc["w1"] = flatten(params.head.w1);
  doc["b1"] = flatten(params.head.b1);
  doc["w2"] = flatten(params.head.w2);
  doc["b2"] = flatten(params.head.b2);
  doc["rule_pack_version"] = params.rule_pack_version;
  doc["provider"] = {{"backend", params.provider_backend}, {"dim", params.provider_dim}};
  return doc.dump() + "\n";
}

FusionHeadParams parse_params(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError("model file must be a JSON object");
  const json& version = field(doc, "format_version");
  if (!version.is_number_integer() || version.get<int>() != kModelFormatVersion) {
    throw ConfigError("unsupported model format_version " + version.dump() + " (expected " +
                      std::to_string(kModelFormatVersion) + ")");
  }

  FusionHeadParams out;
  out.embedding_dim = size_field(doc, "d");
  out.heuristic_dim = size_field(doc, "n_heur");
  const std::size_t hidden = size_field(doc, "hidden");
  const std::size_t input = out.embedding_dim + out.heuristic_dim;
  if (input == 0 || hidden == 0) throw ParseError("model file: dimensions must be positive");

  HeadParams head = HeadParams::zeros(input, hidden);
  // Row-major in the file; fill a row-major buffer then copy.
  std::vector<double> w1(hidden * input);
  read_into(doc, "w1", w1.data(), w1.size());
  for (std::size_t r = 0; r < hidden; ++r) {
    for (std::size_t c = 0; c < input; ++c) {
      head.w1(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w1[r * input + c];
    }
  }
  read_into(doc, "b1", head.b1.data(), hidden);
  std::vector<double> w2(2 * hidden);
  read_into(doc, "w2", w2.data(), w2.size());
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < hidden; ++c) {
      head.w2(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w2[r * hidden + c];
    }
  }
  read_into(doc, "b2", head.b2.data(), 2);
  head.check();
  out.head = std::move(head);

  const json& pack_version = field(doc, "rule_pack_version");
  if (!pack_version.is_string()) throw ParseError("model file: `rule_pack_version` must be a string");
  out.rule_pack_version = pack_version.get<std::string>();
  const json& provider = field(doc, "provider");
  if (!provider.is_object()) throw ParseError("model file: `provider` must be an object");
  const json& backend = field(provider, "backend");
  if (!backend.is_string()) throw ParseError("model file: `provider.backend` must be a string");
  out.provider_backend = backend.get<std::string>();
  out.provider_dim = size_field(provider, "dim");
  if (out.provider_dim != out.embedding_dim) {
    throw DimensionError("model file: provider dim " + std::to_string(out.provider_dim) +
                         " differs from d " + std::to_string(out.embedding_dim));
  }
  return out;
}

void save_params(const FusionHeadParams& params, const std::filesystem::path& path) {
  const std::string text = serialize_params(params);
  // Write to a sibling temp file and rename so readers never see a partial model.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write model file: " + tmp.string());
    out << text;
    if (!out) throw DataError("failed writing model file: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw DataError("cannot move model file into place: " + ec.message());
}

FusionHeadParams load_params(const std::filesystem::path& path, const ModelExpectations& expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read model file: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  FusionHeadParams params = parse_params(buffer.str());
  if (expect.embedding_dim != 0 && params.embedding_dim != expect.embedding_dim) {
    throw DimensionError("model expects embedding dim " + std::to_string(params.embedding_dim) +
                         ", provider supplies " + std::to_string(expect.embedding_dim));
  }
  if (expect.heuristic_dim != 0 && params.heuristic_dim != expect.heuristic_dim) {
    throw DimensionError("model expects " + std::to_string(params.heuristic_dim) +
                         " heuristic features, rule pack defines " +
                         std::to_string(expect.heuristic_dim));
  }
  if (!expect.rule_pack_version.empty() &&
      params.rule_pack_version != expect.rule_pack_version) {
    throw ConfigError("model was trained with rule pack '" + params.rule_pack_version +
                      "', loaded pack is '" + expect.rule_pack_version + "'");
  }
  return params;
}

std::string model_fingerprint(const FusionHeadParams& params) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(embed::fnv1a64(serialize_params(params))));
  return std::string("model-") + std::string(buf, 12);
}

}  // namespace sentinel::fusion
