#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "docpipe/evaluation.hpp"
#include "docpipe/extraction.hpp"
#include "docpipe/orchestrator.hpp"

namespace docpipe {

// Raised for unusable manifests and configs; the CLI maps it to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct ManifestRow {
  std::size_t row = 0;  // 1-based data row
  std::filesystem::path document_path;
  std::optional<std::filesystem::path> ground_truth_path;
  std::optional<std::string> config_ref;
};

struct Manifest {
  std::filesystem::path source;
  std::vector<ManifestRow> rows;
  std::optional<std::string> config_ref;
};

// CSV (header with document_path[,ground_truth_path][,config_ref]) or JSON (a list of row
// objects, or {"rows": [...]}). Relative paths resolve against the manifest directory.
Manifest load_manifest(const std::filesystem::path& path, bool check_files = true);

// Attribute map of one extraction result as the evaluator sees it; bbox-iou attributes
// contribute their box.
json predicted_attributes(const ExtractionResult& result, const ClassSchema* schema);

struct PacketScore {
  std::string packet_id;
  std::vector<FieldCounts> documents;  // one per scored section
  std::optional<PacketSplit> split;
};

// Pairs predicted and labeled sections by (class, page set); unpaired ones count as misses.
PacketScore score_packet(const json& result_document, const GroundTruth& truth, const ClassConfig& classes);

struct RunRow {
  std::string backend;
  Modality modality = Modality::Ocr;
  std::size_t packets = 0;
  std::size_t complete = 0;
  std::size_t awaiting_review = 0;
  std::size_t failed_extraction = 0;
  std::size_t dead_lettered = 0;
  std::optional<double> extraction_score;
  double mean_latency_ms = 0.0;
  double total_cost = 0.0;

  std::size_t failed() const { return failed_extraction + dead_lettered; }
};

struct RunReport {
  std::vector<RunRow> rows;
  std::optional<EvaluationReport> evaluation;
  std::optional<SplitReport> split;
  std::vector<std::string> missing_baselines;
};

// Status counts, mean per-packet extraction latency and total cost over result documents.
RunRow summarize_results(const std::vector<json>& result_documents, const std::string& backend, Modality modality);

json to_json(const RunReport& report);
std::string render_table(const RunReport& report);

// Replaces every "*latency_ms" value with null, recursively.
json mask_latency(json doc);

struct ProcessOptions {
  std::filesystem::path manifest;
  std::optional<std::filesystem::path> config;  // falls back to the manifest's config_ref
  std::optional<Modality> modality;
  std::string backend = "mock";
  std::filesystem::path out;
  EngineHooks hooks;
};

struct ProcessOutcome {
  RunReport report;
  std::vector<std::string> job_ids;
  int exit_code = 0;
};

// Writes <out>/results/<packet_id>.json, <out>/results/_classes.json, <out>/store/ (job store,
// events.log), <out>/run_report.json and <out>/run_report.txt. Throws ConfigError.
ProcessOutcome process(const ProcessOptions& options);

struct EvaluateOptions {
  std::filesystem::path results;
  std::filesystem::path baselines;
  std::optional<std::filesystem::path> classes;  // defaults to <results>/_classes.json
  std::filesystem::path out;
};

struct EvaluateOutcome {
  EvaluationReport evaluation;
  std::optional<SplitReport> split;
  std::vector<std::string> missing_baselines;
  std::vector<std::string> missing_results;
};

// Writes evaluation_report.json/.txt and split_report.json under out.
EvaluateOutcome evaluate_run(const EvaluateOptions& options);

}  // namespace docpipe
