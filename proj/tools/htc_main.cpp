#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "htc/config.hpp"
#include "htc/pipeline.hpp"
#include "htc/util.hpp"

namespace {

int fail(const char* type, const std::exception& e) {
  nlohmann::ordered_json err;
  err["error"] = {{"type", type}, {"message", e.what()}};
  std::cerr << err.dump() << "\n";
  std::cout << "error: " << e.what() << "\n";
  return 1;
}

std::vector<std::string> read_request_lines(const std::string& path) {
  std::string text = htc::read_file(path);
  std::vector<std::string> lines;
  std::string current;
  for (char ch : text) {
    if (ch == '\n') {
      lines.push_back(current);
      current.clear();
    } else if (ch != '\r') {
      current += ch;
    }
  }
  if (!current.empty()) lines.push_back(current);
  return lines;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hybrid hierarchical text classification pipeline"};
  app.require_subcommand(0, 1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed_text;
  std::string out_dir;
  bool print_config = false;
  app.add_option("--config", config_path, "INI configuration file");
  app.add_option("--seed", seed_text, "override run.seed");
  app.add_option("--out", out_dir, "override run.out (the run directory)");
  app.add_option("--set", overrides, "override any config key, e.g. --set embedding.dim=50");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  auto* c_prepare = app.add_subcommand("prepare", "ingest or synthesize the corpus, split, "
                                                  "build vocabulary and tag-combo statistics");
  auto* c_embed = app.add_subcommand("embed", "train token embeddings on the training split");
  auto* c_cluster = app.add_subcommand("cluster", "derive the label -> meta-class map");
  auto* c_train = app.add_subcommand("train", "train the candidate classifiers");
  auto* c_evaluate = app.add_subcommand("evaluate", "score candidates on the holdout and pick "
                                                    "the lowest-log-loss model");
  auto* c_predict = app.add_subcommand("predict", "classify new request texts");
  for (auto* sub : app.get_subcommands(nullptr)) sub->fallthrough();

  std::string model_id;
  std::vector<std::string> texts;
  std::string input_file;
  c_predict->add_option("--model", model_id, "model id (default: the evaluate winner)");
  c_predict->add_option("--text", texts, "request text (repeatable)");
  c_predict->add_option("--input", input_file, "file with one request per line");

  CLI11_PARSE(app, argc, argv);

  htc::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = htc::RunConfig::from_ini_file(config_path);
    for (const auto& kv : overrides) {
      auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!seed_text.empty()) cfg.set("seed", seed_text);
    if (!out_dir.empty()) cfg.set("out", out_dir);
  } catch (const std::exception& e) {
    return fail("config", e);
  }

  if (print_config) {
    std::cout << cfg.to_ini();
    return 0;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return 0;
  }

  try {
    if (c_prepare->parsed()) {
      htc::cmd_prepare(cfg);
      std::cout << "ok: prepare (" << cfg.out << ")\n";
    } else if (c_embed->parsed()) {
      htc::cmd_embed(cfg);
      std::cout << "ok: embed (" << cfg.out << ")\n";
    } else if (c_cluster->parsed()) {
      htc::cmd_cluster(cfg);
      std::cout << "ok: cluster (" << cfg.out << ")\n";
    } else if (c_train->parsed()) {
      htc::cmd_train(cfg);
      std::cout << "ok: train (" << cfg.out << ")\n";
    } else if (c_evaluate->parsed()) {
      htc::cmd_evaluate(cfg);
      std::cout << "ok: evaluate (" << cfg.out << ")\n";
    } else if (c_predict->parsed()) {
      htc::PredictRequest req;
      req.model_id = model_id;
      req.texts = texts;
      if (!input_file.empty()) {
        auto lines = read_request_lines(input_file);
        req.texts.insert(req.texts.end(), lines.begin(), lines.end());
      }
      if (req.texts.empty())
        throw std::invalid_argument("predict: no request texts (use --text or --input)");
      auto preds = htc::cmd_predict(cfg, req);
      for (size_t i = 0; i < preds.size(); ++i) {
        std::cout << "[" << i << "] " << preds[i].label_name << " (id=" << preds[i].label
                  << ", p=" << htc::format_double(preds[i].prob)
                  << (preds[i].no_features ? ", no_features" : "") << ")\n";
      }
    }
  } catch (const std::invalid_argument& e) {
    return fail("usage", e);
  } catch (const std::exception& e) {
    return fail("runtime", e);
  }
  return 0;
}
