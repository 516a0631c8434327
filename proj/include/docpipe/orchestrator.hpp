#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "docpipe/assessment.hpp"
#include "docpipe/extraction.hpp"
#include "docpipe/job_store.hpp"
#include "docpipe/retry.hpp"
#include "docpipe/rules.hpp"
#include "docpipe/segmentation.hpp"

namespace docpipe {

// Queue names used for stage limits.
inline const std::vector<std::string> kStageQueues = {"classify", "split", "extract", "assess", "validate"};

// Queue serving a stage; empty for terminal stages and awaiting_review.
std::string queue_for(Stage stage);

struct EngineConfig {
  ClassConfig classes;
  std::vector<RuleSpec> rules;
  json rules_source = json::array();
  PriceTable prices;
  bool hitl = true;
  double threshold = kDefaultConfidenceThreshold;
  RetryPolicy retry;
  std::uint64_t seed = 0x5eed;
  Modality modality = Modality::Ocr;
  bool few_shot = false;
  int classify_concurrency = 1;
  std::map<std::string, int> stage_limits = {{"classify", 2}, {"split", 2}, {"extract", 2}, {"assess", 2},
                                             {"validate", 2}};

  // Hash of everything that changes job results.
  std::string fingerprint() const;
  void validate() const;
};

// Relative file references ("classes", "rules", "prices") resolve against base_dir.
EngineConfig engine_config_from_json(const json& doc, const std::filesystem::path& base_dir);
EngineConfig load_engine_config(const std::filesystem::path& path);

// DOCPIPE_HITL, DOCPIPE_THRESHOLD, DOCPIPE_MODALITY, DOCPIPE_MAX_ATTEMPTS, DOCPIPE_BASE_DELAY_MS,
// DOCPIPE_RETRY_SEED.
void apply_env_overrides(EngineConfig& config);

struct EngineHooks {
  Sleeper sleeper;  // defaults to real sleeping
  // Fires once a stage output has been renamed into place by the run that produced it.
  std::function<void(const std::string& job_id, Stage stage)> on_stage_committed;
};

class Engine {
 public:
  Engine(EngineConfig config, std::filesystem::path store_root, std::shared_ptr<ClassifierBackend> classifier,
         std::shared_ptr<ExtractorBackend> extractor, EngineHooks hooks = {});

  const EngineConfig& config() const { return config_; }
  JobStore& store() { return store_; }
  const JobStore& store() const { return store_; }
  // Config fingerprint plus backend names.
  const std::string& config_hash() const { return config_hash_; }

  // Idempotent per (packet_id, config hash). Throws ValidationError/ParseError for bad packets.
  std::string submit(const std::filesystem::path& packet_path);

  // Drives the job until it is terminal or awaiting review. Throws JobNotFound.
  JobRecord run(const std::string& job_id);
  // Executes one transition and returns the new stage.
  Stage step(const std::string& job_id);

  // Non-terminal jobs not awaiting review, in submission order. Corrupt records are marked failed.
  std::vector<std::string> pending_jobs();
  std::vector<std::string> resume_pending();

  // Applies a decision to a job awaiting review and moves it to validating (the caller runs it).
  // Throws JobNotFound, ReviewConflict, IncompleteDecision, Unauthorized, KindMismatch, ValidationError.
  JobRecord submit_review(const std::string& job_id, const ReviewDecision& decision);

  JobRecord status(const std::string& job_id) const;
  std::vector<JobRecord> jobs() const;

  json sections_view(const std::string& job_id) const;
  json extraction_view(const std::string& job_id) const;
  json intermediates_view(const std::string& job_id) const;
  json determinations_view(const std::string& job_id) const;
  // Flagged attributes with their values and evidence; null unless awaiting review.
  json review_item(const std::string& job_id) const;
  // Everything the job produced, without wall-clock fields other than latency.
  json result_document(const std::string& job_id) const;

 private:
  Stage classify(JobRecord& record);
  Stage split(JobRecord& record);
  Stage extract(JobRecord& record);
  Stage assess(JobRecord& record);
  Stage validate(JobRecord& record);
  Stage resume_review(JobRecord& record);

  void commit_output(JobRecord& record, Stage stage, const std::string& name, const json& doc);
  Stage dead_letter(JobRecord& record, const std::string& stage, const std::string& error, int attempts);
  Stage fail(JobRecord& record, const std::string& error);
  void finish(JobRecord& record, Stage terminal);
  std::vector<ExtractionResult> current_results(const std::string& job_id) const;
  void sleep(Millis delay) const;

  EngineConfig config_;
  JobStore store_;
  std::shared_ptr<ClassifierBackend> classifier_;
  std::shared_ptr<ExtractorBackend> extractor_;
  EngineHooks hooks_;
  std::string config_hash_;
  Backoff backoff_;
  std::mutex submit_mu_;
};

// Per-stage FIFO queues with bounded concurrency per stage.
class WorkerPool {
 public:
  // Limits keyed by queue name; missing queues get limit 1.
  WorkerPool(Engine& engine, std::map<std::string, int> limits);
  ~WorkerPool();

  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  void submit(const std::string& job_id);
  // Blocks until no job is queued or running.
  void wait_idle();
  // Stops dispatching; in-flight steps finish and persist. Queued jobs stay at their stage.
  void shutdown();

  std::map<std::string, int> peak_concurrency() const;
  // (queue, job_id) in dispatch order.
  std::vector<std::pair<std::string, std::string>> dispatch_log() const;
  std::vector<std::string> errors() const;

 private:
  void worker();

  Engine& engine_;
  std::map<std::string, int> limits_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::map<std::string, std::deque<std::string>> queues_;
  std::map<std::string, int> running_;
  std::map<std::string, int> peak_;
  std::vector<std::pair<std::string, std::string>> log_;
  std::vector<std::string> errors_;
  bool stopping_ = false;
  std::vector<std::jthread> threads_;
};

}  // namespace docpipe
