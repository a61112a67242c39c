#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "sentinel/dataio.h"
#include "sentinel/errors.h"
#include "util/random.h"

namespace sentinel::data {
namespace {

using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read dataset: " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

Label label_from_json(const json& value) {
  if (value.is_number_integer()) {
    const auto v = value.get<std::int64_t>();
    if (v == 0) return Label::kBenign;
    if (v == 1) return Label::kInjection;
    throw DataError("label must be 0 or 1, got " + std::to_string(v));
  }
  if (value.is_string()) return fusion::parse_label(value.get<std::string>());
  throw DataError("label must be 0/1 or \"benign\"/\"injection\"");
}

void check_malformed(const LoadReport& report, const std::filesystem::path& path) {
  const std::size_t total = report.examples.size() + report.errors.size();
  if (total == 0) return;
  const double fraction = static_cast<double>(report.errors.size()) / static_cast<double>(total);
  if (fraction > kMaxMalformedFraction) {
    std::string message = path.string() + ": " + std::to_string(report.errors.size()) + " of " +
                          std::to_string(total) + " records are malformed";
    for (std::size_t i = 0; i < report.errors.size() && i < 5; ++i) {
      message += "\n  line " + std::to_string(report.errors[i].line) + ": " +
                 report.errors[i].message;
    }
    throw DataError(message);
  }
}

std::string stem_or(const std::filesystem::path& path, std::string fallback) {
  return fallback.empty() ? path.stem().string() : fallback;
}

// Splits CSV text into records of fields; `lines` receives each record's
// starting line number.
std::vector<std::vector<std::string>> parse_csv(std::string_view text,
                                                std::vector<std::size_t>& lines) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string fieldbuf;
  bool quoted = false;
  bool field_started = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  auto end_field = [&] {
    record.push_back(std::move(fieldbuf));
    fieldbuf.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record.front().empty())) {
      records.push_back(std::move(record));
      lines.push_back(record_line);
    }
    record.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          fieldbuf += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        fieldbuf += c;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field_started && fieldbuf.empty()) {
          quoted = true;
          field_started = true;
        } else {
          fieldbuf += c;
        }
        break;
      case ',':
        end_field();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        fieldbuf += c;
        field_started = true;
    }
  }
  if (quoted) throw DataError("CSV ends inside a quoted field (record at line " +
                              std::to_string(record_line) + ")");
  if (!fieldbuf.empty() || !record.empty()) end_record();
  return records;
}

}  // namespace

LoadReport load_jsonl(const std::filesystem::path& path, std::string default_source) {
  const std::string content = read_file(path);
  const std::string source = stem_or(path, std::move(default_source));
  LoadReport report;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < content.size()) {
    std::size_t end = content.find('\n', pos);
    if (end == std::string::npos) end = content.size();
    const std::string_view line(content.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (blank(line)) continue;
    try {
      const json obj = json::parse(line);
      if (!obj.is_object()) throw DataError("expected a JSON object");
      if (!obj.contains("text") || !obj["text"].is_string()) {
        throw DataError("missing string field `text`");
      }
      if (!obj.contains("label")) throw DataError("missing field `label`");
      LabeledExample ex;
      ex.text = obj["text"].get<std::string>();
      if (blank(ex.text)) throw DataError("`text` is empty");
      ex.label = label_from_json(obj["label"]);
      ex.source = obj.contains("source") && obj["source"].is_string()
                      ? obj["source"].get<std::string>()
                      : source;
      report.examples.push_back(std::move(ex));
    } catch (const json::exception& e) {
      report.errors.push_back({line_no, std::string("invalid JSON: ") + e.what()});
    } catch (const Error& e) {
      report.errors.push_back({line_no, e.what()});
    }
  }
  check_malformed(report, path);
  return report;
}

LoadReport load_csv(const std::filesystem::path& path, std::string default_source) {
  const std::string content = read_file(path);
  const std::string source = stem_or(path, std::move(default_source));
  std::vector<std::size_t> lines;
  const auto records = parse_csv(content, lines);
  LoadReport report;
  if (records.empty()) return report;

  const auto& header = records.front();
  auto column = [&](std::string_view name) -> std::ptrdiff_t {
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::string h = header[i];
      if (i == 0 && h.rfind("\xEF\xBB\xBF", 0) == 0) h.erase(0, 3);  // BOM
      if (h == name) return static_cast<std::ptrdiff_t>(i);
    }
    return -1;
  };
  const auto text_col = column("text");
  const auto label_col = column("label");
  const auto source_col = column("source");
  if (text_col < 0 || label_col < 0) {
    throw DataError(path.string() + ": CSV header must name `text` and `label` columns");
  }

  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    try {
      if (rec.size() != header.size()) {
        throw DataError("expected " + std::to_string(header.size()) + " fields, found " +
                        std::to_string(rec.size()));
      }
      LabeledExample ex;
      ex.text = rec[static_cast<std::size_t>(text_col)];
      if (blank(ex.text)) throw DataError("`text` is empty");
      ex.label = fusion::parse_label(rec[static_cast<std::size_t>(label_col)]);
      ex.source = source_col >= 0 && !rec[static_cast<std::size_t>(source_col)].empty()
                      ? rec[static_cast<std::size_t>(source_col)]
                      : source;
      report.examples.push_back(std::move(ex));
    } catch (const Error& e) {
      report.errors.push_back({lines[r], e.what()});
    }
  }
  check_malformed(report, path);
  return report;
}

LoadReport load_examples(const std::filesystem::path& path, std::string default_source) {
  if (path.extension() == ".csv") return load_csv(path, std::move(default_source));
  return load_jsonl(path, std::move(default_source));
}

std::string to_jsonl_line(const LabeledExample& example) {
  return nlohmann::ordered_json{{"text", example.text},
              {"label", static_cast<int>(example.label)},
              {"source", example.source}}
      .dump();
}

void write_jsonl(const std::vector<LabeledExample>& examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write dataset: " + path.string());
  for (const auto& ex : examples) out << to_jsonl_line(ex) << '\n';
  if (!out) throw DataError("failed writing dataset: " + path.string());
}

DatasetSplit split(const std::vector<LabeledExample>& examples, SplitRatios ratios,
                   std::uint64_t seed) {
  if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0) {
    throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  if (examples.size() < kMinSplitExamples) {
    throw DataError("need at least " + std::to_string(kMinSplitExamples) +
                    " examples to split, got " + std::to_string(examples.size()));
  }

  const std::size_t n = examples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  util::shuffle(std::span<std::size_t>(order), rng);

  // The small epsilon keeps e.g. 13000 * 0.1 from flooring to 1299.
  auto part = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
  };
  const std::size_t n_val = part(ratios.val);
  const std::size_t n_test = part(ratios.test);
  const std::size_t n_train = n - n_val - n_test;

  DatasetSplit out;
  out.seed = seed;
  out.ratios = ratios;
  out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                         order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val),
                          order.end());
  for (auto i : out.train_indices) out.train.push_back(examples[i]);
  for (auto i : out.val_indices) out.val.push_back(examples[i]);
  for (auto i : out.test_indices) out.test.push_back(examples[i]);
  return out;
}

}  // namespace sentinel::data
