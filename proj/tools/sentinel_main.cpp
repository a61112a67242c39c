// sentinel: prompt-injection detection from the command line.
//
// Exit codes: 0 ok, 1 operational failure, 2 usage error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <pthread.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "sentinel/dataio.h"
#include "sentinel/detector.h"
#include "sentinel/embed.h"
#include "sentinel/errors.h"
#include "sentinel/eval.h"
#include "sentinel/fusion.h"
#include "sentinel/gateway.h"
#include "sentinel/rules.h"

namespace {

using namespace sentinel;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Bad arguments detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << content;
  if (!out) throw DataError("failed writing " + path);
}

bool blank(std::string_view s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string_view::npos;
}

std::shared_ptr<const rules::RulePack> load_pack(const std::string& path) {
  if (path.empty()) return std::make_shared<const rules::RulePack>(rules::default_rule_pack());
  return std::make_shared<const rules::RulePack>(rules::load_rule_pack(path));
}

// Embedding provider flags shared by detect / train / eval.
struct ProviderFlags {
  std::string backend;
  std::size_t dim = 0;
  std::string endpoint;
  std::string onnx_model;
  std::string tokenizer;
  int timeout_ms = 10000;

  void attach(CLI::App* app) {
    app->add_option("--provider", backend, "Embedding backend: stub, onnx_file or remote")
        ->check(CLI::IsMember({"stub", "onnx_file", "onnx", "remote"}));
    app->add_option("--dim", dim, "Embedding dimension (default 768, or the model's)")
        ->check(CLI::PositiveNumber);
    app->add_option("--endpoint", endpoint, "Sidecar base URL for the remote backend");
    app->add_option("--onnx-model", onnx_model, "ONNX encoder file for onnx_file");
    app->add_option("--tokenizer", tokenizer, "tokenizer.json for onnx_file");
    app->add_option("--provider-timeout-ms", timeout_ms, "Remote provider timeout")
        ->check(CLI::PositiveNumber);
  }

  // Unset fields fall back to `model` when given (the backend it was trained with).
  embed::ProviderConfig config(const fusion::FusionHeadParams* model = nullptr) const {
    embed::ProviderConfig c;
    if (!backend.empty()) c.backend = embed::parse_backend(backend);
    else if (model) c.backend = embed::parse_backend(model->provider_backend);
    if (dim != 0) c.dimension = dim;
    else if (model) c.dimension = model->provider_dim;
    c.endpoint = endpoint;
    c.model_path = onnx_model;
    c.tokenizer_path = tokenizer;
    c.timeout = std::chrono::milliseconds(timeout_ms);
    return c;
  }
};

std::shared_ptr<const detect::Detector> make_detector(const std::string& rules_path,
                                                      const std::string& model_path,
                                                      const ProviderFlags& provider,
                                                      double threshold) {
  auto pack = load_pack(rules_path);
  if (model_path.empty()) return std::make_shared<detect::PipelineDetector>(pack, threshold);
  auto model = fusion::parse_params(read_file(model_path));
  std::shared_ptr<const embed::EmbeddingProvider> p = embed::make_provider(provider.config(&model));
  return std::make_shared<detect::PipelineDetector>(pack, std::move(p), std::move(model), threshold);
}

// ---- detect ---------------------------------------------------------------

struct DetectArgs {
  std::string text;
  bool from_stdin = false;
  std::string rules;
  std::string model;
  bool heuristics_only = false;
  std::string format = "text";
  double threshold = 0.5;
  ProviderFlags provider;
};

int run_detect(const DetectArgs& a) {
  std::string text = a.text;
  if (a.from_stdin) {
    text.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
  }
  if (blank(text)) throw UsageError("no input text (use --text or --stdin)");
  if (!a.heuristics_only && a.model.empty()) {
    std::cerr << "note: no --model given, using heuristics only\n";
  }
  const auto detector = make_detector(a.rules, a.heuristics_only ? "" : a.model, a.provider,
                                      a.threshold);
  const auto verdict = detector->detect(text);
  if (a.format == "json") std::cout << detect::verdict_to_json(verdict) << '\n';
  else std::cout << detect::verdict_to_text(verdict);
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string rules;
  std::string out;
  std::string preset = "default";
  std::string ratios = "0.8,0.1,0.1";
  double lr = 0;
  std::size_t batch_size = 0;
  double weight_decay = -1;
  std::size_t patience = 0;
  std::size_t max_epochs = 0;
  std::size_t hidden = 0;
  std::uint64_t seed = 42;
  bool quiet = false;
  ProviderFlags provider;
};

data::SplitRatios parse_ratios(const std::string& text) {
  std::vector<double> parts;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw UsageError("--ratios: '" + item + "' is not a number");
    }
    if (used != item.size()) throw UsageError("--ratios: '" + item + "' is not a number");
    parts.push_back(v);
  }
  if (parts.size() != 3) throw UsageError("--ratios needs three values train,val,test");
  data::SplitRatios r{parts[0], parts[1], parts[2]};
  if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw UsageError("--ratios must be non-negative and sum to 1");
  }
  if (r.val <= 0) throw UsageError("--ratios: validation share must be positive");
  return r;
}

int run_train(const TrainArgs& a) {
  const auto ratios = parse_ratios(a.ratios);
  fusion::TrainConfig config =
      a.preset == "paper" ? fusion::TrainConfig::reference_preset() : fusion::TrainConfig{};
  if (a.lr > 0) config.learning_rate = a.lr;
  if (a.batch_size > 0) config.batch_size = a.batch_size;
  if (a.weight_decay >= 0) config.weight_decay = a.weight_decay;
  if (a.patience > 0) config.patience = a.patience;
  if (a.max_epochs > 0) config.max_epochs = a.max_epochs;
  if (a.hidden > 0) config.hidden = a.hidden;
  config.seed = a.seed;
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }

  const auto report = data::load_examples(a.data);
  for (const auto& err : report.errors) {
    std::cerr << a.data << ':' << err.line << ": skipped: " << err.message << '\n';
  }
  const auto parts = data::split(report.examples, ratios, a.seed);
  const auto pack = load_pack(a.rules);
  const auto pcfg = a.provider.config();
  std::shared_ptr<const embed::EmbeddingProvider> provider = embed::make_provider(pcfg);

  const auto train_set = detect::featurize(parts.train, *pack, *provider);
  const auto val_set = detect::featurize(parts.val, *pack, *provider);
  std::cerr << "train " << parts.train.size() << " / val " << parts.val.size() << " / test "
            << parts.test.size() << " examples, input width "
            << provider->dimension() + pack->size() << '\n';

  const auto result = fusion::train(train_set, val_set, config, [&](const fusion::EpochLog& e) {
    if (a.quiet) return;
    char line[160];
    std::snprintf(line, sizeof(line),
                  "epoch %3zu  train loss %.6f acc %.4f  val loss %.6f acc %.4f%s\n", e.epoch,
                  e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy,
                  e.improved ? "  *" : "");
    std::cerr << line;
  });

  fusion::FusionHeadParams model;
  model.head = result.params;
  model.embedding_dim = provider->dimension();
  model.heuristic_dim = pack->size();
  model.rule_pack_version = pack->version();
  model.provider_backend = std::string(embed::to_string(provider->backend()));
  model.provider_dim = provider->dimension();
  fusion::save_params(model, a.out);

  std::cout << "model:       " << a.out << " (" << fusion::model_fingerprint(model) << ")\n";
  std::cout << "best epoch:  " << result.best_epoch << " of " << result.log.size() << '\n';
  char loss[64];
  std::snprintf(loss, sizeof(loss), "%.6f", result.best_val_loss);
  std::cout << "val loss:    " << loss << '\n';
  if (!parts.test.empty()) {
    detect::PipelineDetector detector(pack, provider, model);
    const auto rep = eval::evaluate(detector, parts.test);
    std::cout << "\ntest split\n" << eval::render_text(rep);
  }
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string data;
  std::string rules;
  bool heuristics_only = false;
  std::string out;
  std::string format = "text";
  double threshold = 0.5;
  ProviderFlags provider;
};

int run_eval(const EvalArgs& a) {
  if (a.model.empty() && !a.heuristics_only) {
    throw UsageError("eval needs --model or --heuristics-only");
  }
  const auto detector =
      make_detector(a.rules, a.heuristics_only ? "" : a.model, a.provider, a.threshold);
  const auto loaded = data::load_examples(a.data);
  for (const auto& err : loaded.errors) {
    std::cerr << a.data << ':' << err.line << ": skipped: " << err.message << '\n';
  }
  const auto report = eval::evaluate(*detector, loaded.examples);
  if (a.format == "json") std::cout << eval::render_json(report);
  else std::cout << eval::render_text(report);
  if (!a.out.empty()) write_file(a.out, eval::render_json(report));
  return kExitOk;
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string config;
  std::string listen;
  std::string upstream;
  std::string mode;
  std::optional<double> threshold;
  bool heuristics_only = false;
  std::string model;
  std::string rules;
  std::string request_log;
  bool log_prompts = false;
};

int run_serve(const ServeArgs& a) {
  gateway::GatewayConfig config;
  if (!a.config.empty()) config = gateway::load_config(a.config);
  gateway::apply_env_overrides(config);
  try {
    if (!a.listen.empty()) gateway::parse_listen(a.listen, config.listen_host, config.listen_port);
    if (!a.mode.empty()) config.mode = gateway::parse_mode(a.mode);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  if (!a.upstream.empty()) config.upstream = a.upstream;
  if (a.threshold) config.threshold = *a.threshold;
  if (a.heuristics_only) config.heuristics_only = true;
  if (!a.model.empty()) config.model_path = a.model;
  if (!a.rules.empty()) config.rules_path = a.rules;
  if (!a.request_log.empty()) config.request_log = a.request_log;
  if (a.log_prompts) config.log_prompts = true;

  // Signals are taken synchronously below; block them before any thread starts.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  sigaddset(&signals, SIGHUP);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  gateway::Gateway gw(config);
  const int port = gw.start();
  const auto state = gw.state();
  std::cerr << "listening on " << config.listen_host << ':' << port << " (mode "
            << gateway::to_string(config.mode) << ", model " << state->model_version
            << ", rules " << state->rule_pack_version << ")\n";
  if (state->degraded) std::cerr << "warning: degraded: " << state->degraded_reason << '\n';

  for (;;) {
    int sig = 0;
    if (sigwait(&signals, &sig) != 0) break;
    if (sig != SIGHUP) break;
    try {
      gw.reload();
      std::cerr << "reloaded: model " << gw.state()->model_version << '\n';
    } catch (const std::exception& e) {
      std::cerr << "reload failed: " << e.what() << '\n';
    }
  }
  std::cerr << "shutting down\n";
  gw.stop();
  return kExitOk;
}

// ---- rules ----------------------------------------------------------------

int run_rules_validate(const std::string& path) {
  std::vector<std::string> notes;
  const auto pack = path.empty() ? rules::default_rule_pack() : rules::load_rule_pack(path, &notes);
  for (const auto& n : notes) std::cerr << "note: " << n << '\n';
  std::cout << "rule pack " << pack.version() << ": " << pack.semantic().size() << " semantic + "
            << pack.structural().size() << " structural = " << pack.size() << " features\n";
  std::size_t i = 0;
  for (const auto& r : pack.semantic()) {
    std::cout << "  [" << i++ << "] " << r.name << "  keywords " << r.seed_keywords.size()
              << ", synonyms " << r.synonym_set.size() << '\n';
  }
  for (const auto& r : pack.structural()) {
    std::cout << "  [" << i++ << "] " << r.name << "  " << rules::to_string(r.kind)
              << " >= " << r.threshold << '\n';
  }
  return kExitOk;
}

// Cases file: JSONL of {"text": ..., "expected": [rule names]}.
int run_rules_test(const std::string& rules_path, const std::string& text,
                   const std::string& cases_path) {
  const auto pack = load_pack(rules_path);
  if (cases_path.empty()) {
    if (blank(text)) throw UsageError("rules test needs --text or --cases");
    const auto v = rules::extract_features(text, *pack);
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::cout << static_cast<int>(v.bits[i]) << "  " << v.names[i] << '\n';
    }
    return kExitOk;
  }
  std::ifstream in(cases_path);
  if (!in) throw DataError("cannot read " + cases_path);
  std::string line;
  std::size_t line_no = 0, passed = 0, failed = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    json doc;
    try {
      doc = json::parse(line);
      const auto t = doc.at("text").get<std::string>();
      auto expected = doc.at("expected").get<std::vector<std::string>>();
      auto got = rules::extract_features(t, *pack).triggered();
      std::sort(expected.begin(), expected.end());
      std::sort(got.begin(), got.end());
      if (got == expected) {
        ++passed;
      } else {
        ++failed;
        std::cout << "FAIL line " << line_no << ": expected [";
        for (const auto& s : expected) std::cout << ' ' << s;
        std::cout << " ] got [";
        for (const auto& s : got) std::cout << ' ' << s;
        std::cout << " ]\n";
      }
    } catch (const json::exception& e) {
      throw ParseError(cases_path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::cout << passed << " passed, " << failed << " failed\n";
  return failed == 0 ? kExitOk : kExitFailure;
}

// Fills every semantic rule's `synonyms` from the thesaurus; keywords are kept
// as written.
int run_rules_expand(const std::string& in_path, const std::string& out_path,
                     const std::string& thesaurus_path) {
  const auto pack = rules::load_rule_pack(in_path);
  json doc = json::parse(read_file(in_path));
  const rules::Thesaurus loaded =
      thesaurus_path.empty() ? rules::Thesaurus() : rules::Thesaurus::load(thesaurus_path);
  const rules::Thesaurus& thesaurus = thesaurus_path.empty() ? rules::Thesaurus::builtin() : loaded;
  const text::Normalizer normalizer;
  auto& semantic = doc.at("semantic");
  std::size_t added = 0;
  for (std::size_t i = 0; i < semantic.size(); ++i) {
    const auto& rule = pack.semantic().at(i);
    const auto expanded = rules::expand_synonyms(rule.seed_keywords, thesaurus, normalizer);
    added += expanded.size() - rule.seed_keywords.size();
    semantic[i]["synonyms"] = std::vector<std::string>(expanded.begin(), expanded.end());
  }
  const auto text = doc.dump(2) + "\n";
  rules::parse_rule_pack(text);  // the result must still be a valid pack
  write_file(out_path, text);
  std::cerr << "expanded " << semantic.size() << " rules (+" << added << " synonyms) -> "
            << out_path << '\n';
  return kExitOk;
}

// ---- ingest ---------------------------------------------------------------

int run_ingest(const std::string& in_path, const std::string& out_path, const std::string& source) {
  const auto report = data::load_examples(in_path, source);
  for (const auto& err : report.errors) {
    std::cerr << in_path << ':' << err.line << ": skipped: " << err.message << '\n';
  }
  data::write_jsonl(report.examples, out_path);
  std::size_t injections = 0;
  for (const auto& ex : report.examples) injections += ex.label == fusion::Label::kInjection;
  std::cout << report.examples.size() << " examples (" << injections << " injection, "
            << report.examples.size() - injections << " benign) -> " << out_path << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prompt-injection detection: rules + embedding fusion, CLI and filtering gateway"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "sentinel 1.0.0");

  DetectArgs det;
  auto* detect_cmd = app.add_subcommand("detect", "Score one prompt");
  auto* text_opt = detect_cmd->add_option("--text", det.text, "Prompt text");
  auto* stdin_opt = detect_cmd->add_flag("--stdin", det.from_stdin, "Read the prompt from stdin");
  text_opt->excludes(stdin_opt);
  detect_cmd->add_option("--rules", det.rules, "Rule pack JSON (default: bundled pack)");
  auto* model_opt = detect_cmd->add_option("--model", det.model, "Trained fusion head");
  detect_cmd->add_flag("--heuristics-only", det.heuristics_only, "Rules channel only")
      ->excludes(model_opt);
  detect_cmd->add_option("--format", det.format, "text or json")
      ->check(CLI::IsMember({"text", "json"}));
  detect_cmd->add_option("--threshold", det.threshold, "Injection threshold on p_injection")
      ->check(CLI::Range(0.0, 1.0));
  det.provider.attach(detect_cmd);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train the fusion head");
  train_cmd->add_option("--data", tr.data, "Labeled JSONL or CSV")->required();
  train_cmd->add_option("--rules", tr.rules, "Rule pack JSON (default: bundled pack)");
  train_cmd->add_option("--out", tr.out, "Model file to write")->required();
  train_cmd->add_option("--preset", tr.preset, "Hyperparameter preset: default or paper")
      ->check(CLI::IsMember({"default", "paper"}));
  train_cmd->add_option("--ratios", tr.ratios, "train,val,test split ratios");
  train_cmd->add_option("--lr", tr.lr, "Learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch-size", tr.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--weight-decay", tr.weight_decay, "Decoupled weight decay")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--patience", tr.patience, "Early-stopping patience")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--max-epochs", tr.max_epochs, "Epoch limit")->check(CLI::PositiveNumber);
  train_cmd->add_option("--hidden", tr.hidden, "Hidden width")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr.seed, "Seed for split, init and shuffling");
  train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch log");
  tr.provider.attach(train_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a detector on labeled data");
  auto* eval_model = eval_cmd->add_option("--model", ev.model, "Trained fusion head");
  eval_cmd->add_option("--data", ev.data, "Labeled JSONL or CSV")->required();
  eval_cmd->add_option("--rules", ev.rules, "Rule pack JSON (default: bundled pack)");
  eval_cmd->add_flag("--heuristics-only", ev.heuristics_only, "Rules channel only")
      ->excludes(eval_model);
  eval_cmd->add_option("--out", ev.out, "Write the JSON report here");
  eval_cmd->add_option("--format", ev.format, "stdout format: text or json")
      ->check(CLI::IsMember({"text", "json"}));
  eval_cmd->add_option("--threshold", ev.threshold, "Injection threshold on p_injection")
      ->check(CLI::Range(0.0, 1.0));
  ev.provider.attach(eval_cmd);

  ServeArgs sv;
  auto* serve_cmd = app.add_subcommand("serve", "Run the detection gateway");
  serve_cmd->add_option("--config", sv.config, "Gateway TOML config");
  serve_cmd->add_option("--listen", sv.listen, "host:port");
  serve_cmd->add_option("--upstream", sv.upstream, "Upstream base URL, e.g. https://host/v1");
  serve_cmd->add_option("--mode", sv.mode, "block or flag")->check(CLI::IsMember({"block", "flag"}));
  serve_cmd->add_option("--threshold", sv.threshold, "Injection threshold");
  serve_cmd->add_flag("--heuristics-only", sv.heuristics_only, "Rules channel only");
  serve_cmd->add_option("--model", sv.model, "Trained fusion head");
  serve_cmd->add_option("--rules", sv.rules, "Rule pack JSON");
  serve_cmd->add_option("--request-log", sv.request_log, "Append JSONL request records here");
  serve_cmd->add_flag("--log-prompts", sv.log_prompts, "Include prompt text in the request log");

  auto* rules_cmd = app.add_subcommand("rules", "Inspect and maintain rule packs");
  rules_cmd->require_subcommand(1);
  std::string rules_path, rules_text, rules_cases, expand_in, expand_out, thesaurus_path;
  auto* validate_cmd = rules_cmd->add_subcommand("validate", "Check a pack and print its layout");
  validate_cmd->add_option("--rules,pack", rules_path, "Rule pack JSON (default: bundled pack)");
  auto* test_cmd = rules_cmd->add_subcommand("test", "Run the rules channel on text or cases");
  test_cmd->add_option("--rules", rules_path, "Rule pack JSON (default: bundled pack)");
  test_cmd->add_option("--text", rules_text, "Text to analyse");
  test_cmd->add_option("--cases", rules_cases, "JSONL of {text, expected: [rule names]}");
  auto* expand_cmd = rules_cmd->add_subcommand("expand", "Fill synonym sets from the thesaurus");
  expand_cmd->add_option("--rules", expand_in, "Input rule pack")->required();
  expand_cmd->add_option("--out", expand_out, "Output rule pack")->required();
  expand_cmd->add_option("--thesaurus", thesaurus_path, "Thesaurus TSV (default: bundled)");

  std::string ingest_in, ingest_out, ingest_source;
  auto* ingest_cmd = app.add_subcommand("ingest", "Convert JSONL/CSV to canonical JSONL");
  ingest_cmd->add_option("--in", ingest_in, "Input JSONL or CSV")->required();
  ingest_cmd->add_option("--out", ingest_out, "Output JSONL")->required();
  ingest_cmd->add_option("--source", ingest_source, "Source id for rows without one");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*detect_cmd) return run_detect(det);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*serve_cmd) return run_serve(sv);
    if (*validate_cmd) return run_rules_validate(rules_path);
    if (*test_cmd) return run_rules_test(rules_path, rules_text, rules_cases);
    if (*expand_cmd) return run_rules_expand(expand_in, expand_out, thesaurus_path);
    if (*ingest_cmd) return run_ingest(ingest_in, ingest_out, ingest_source);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
