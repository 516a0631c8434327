// docpipe command line: process, evaluate, gen-corpus, serve.

#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "docpipe/backends.hpp"
#include "docpipe/batch.hpp"
#include "docpipe/corpus.hpp"
#include "docpipe/service.hpp"

namespace fs = std::filesystem;
using namespace docpipe;

namespace {

constexpr int kExitFailures = 1;
constexpr int kExitConfig = 2;

Service* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int run_process(const fs::path& manifest, const std::string& config, const std::string& modality,
                const std::string& backend, const fs::path& out) {
  ProcessOptions opts;
  opts.manifest = manifest;
  if (!config.empty()) opts.config = config;
  if (!modality.empty()) opts.modality = parse_modality(modality);
  opts.backend = backend;
  opts.out = out;
  const ProcessOutcome outcome = process(opts);
  std::cout << render_table(outcome.report);
  std::cout << "results: " << (out / "results").string() << "\nreport: " << (out / "run_report.json").string() << "\n";
  return outcome.exit_code;
}

int run_evaluate(const fs::path& results, const fs::path& baselines, const std::string& classes, const fs::path& out) {
  EvaluateOptions opts;
  opts.results = results;
  opts.baselines = baselines;
  if (!classes.empty()) opts.classes = classes;
  opts.out = out;
  const EvaluateOutcome outcome = evaluate_run(opts);
  std::cout << render_table(outcome.evaluation);
  if (outcome.split)
    std::cout << "\nSplit  page accuracy " << outcome.split->page_accuracy << "  ordered "
              << outcome.split->ordered_accuracy << "  unordered " << outcome.split->unordered_accuracy << "\n";
  return 0;
}

int run_serve(const fs::path& config_path, const std::string& bind, const fs::path& tokens_file, const fs::path& store,
              const std::string& backend) {
  EngineConfig config = load_engine_config(config_path);
  apply_env_overrides(config);
  const auto tokens = load_tokens(tokens_file);
  std::string host = "127.0.0.1";
  int port = 8080;
  if (auto colon = bind.rfind(':'); colon != std::string::npos) {
    host = bind.substr(0, colon);
    port = std::stoi(bind.substr(colon + 1));
  } else if (!bind.empty()) {
    port = std::stoi(bind);
  }
  Engine engine(config, store, make_classifier(backend), make_extractor(backend, config.classes));
  WorkerPool pool(engine, config.stage_limits);
  for (const auto& id : engine.pending_jobs()) pool.submit(id);
  Service service(engine, pool, tokens, backend);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "listening on " << host << ":" << port << "\n";
  service.listen(host, port);
  g_service = nullptr;
  pool.shutdown();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Document packet processing engine"};
  app.require_subcommand(1);

  std::string manifest, config, modality, backend = "mock", out;
  auto* process_cmd = app.add_subcommand("process", "Run every packet in a manifest through the pipeline");
  process_cmd->add_option("--manifest", manifest, "CSV or JSON manifest")->required();
  process_cmd->add_option("--config", config, "Engine config (defaults to the manifest's config_ref)");
  process_cmd->add_option("--modality", modality, "ocr, image or ocr+image");
  process_cmd->add_option("--backend", backend, "mock, always_prose, always_fail or http");
  process_cmd->add_option("--out", out, "Run directory")->required();

  std::string results, baselines, classes, eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a results directory against baselines");
  eval_cmd->add_option("--results", results, "Results directory written by process")->required();
  eval_cmd->add_option("--baselines", baselines, "Manifest with ground_truth_path entries")->required();
  eval_cmd->add_option("--classes", classes, "Class config (defaults to <results>/_classes.json)");
  eval_cmd->add_option("--out", eval_out, "Report directory")->required();

  std::string gen_classes, gen_out;
  CorpusOptions corpus;
  bool no_images = false;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "Generate a synthetic packet corpus with ground truth");
  gen_cmd->add_option("--classes", gen_classes, "Class config")->required();
  gen_cmd->add_option("--count", corpus.count, "Number of packets");
  gen_cmd->add_option("--seed", corpus.seed, "Random seed");
  gen_cmd->add_option("--out", gen_out, "Output directory")->required();
  gen_cmd->add_option("--min-pages", corpus.min_pages, "Fewest pages per packet");
  gen_cmd->add_option("--max-pages", corpus.max_pages, "Most pages per packet");
  gen_cmd->add_option("--low-confidence-rate", corpus.low_confidence_rate, "Share of documents with a low-confidence value");
  gen_cmd->add_option("--other-rate", corpus.other_page_rate, "Share of unclassifiable filler pages");
  gen_cmd->add_flag("--no-images", no_images, "Omit page image references");

  std::string serve_config, bind = "127.0.0.1:8080", tokens_file, store = "docpipe-store", serve_backend = "mock";
  auto* serve_cmd = app.add_subcommand("serve", "Serve the job and review API");
  serve_cmd->add_option("--config", serve_config, "Engine config")->required();
  serve_cmd->add_option("--bind", bind, "host:port");
  serve_cmd->add_option("--tokens-file", tokens_file, "Bearer tokens and roles")->required();
  serve_cmd->add_option("--store", store, "Job store directory");
  serve_cmd->add_option("--backend", serve_backend, "Extractor backend");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*process_cmd) return run_process(manifest, config, modality, backend, out);
    if (*eval_cmd) return run_evaluate(results, baselines, classes, eval_out);
    if (*gen_cmd) {
      corpus.image_refs = !no_images;
      const auto files = generate_corpus(load_class_config(gen_classes), corpus, gen_out);
      std::cout << "wrote " << files.packets.size() << " packets to " << gen_out << "\n";
      return 0;
    }
    if (*serve_cmd) return run_serve(serve_config, bind, tokens_file, store, serve_backend);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailures;
  }
  return 0;
}
