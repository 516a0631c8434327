#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "docpipe/assessment.hpp"
#include "docpipe/core.hpp"

namespace docpipe {

enum class Stage {
  Queued,
  Classifying,
  Splitting,
  Extracting,
  Assessing,
  AwaitingReview,
  Validating,
  Complete,
  Failed,
  DeadLettered,
};

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);
bool is_terminal(Stage stage);

struct JobRecord {
  std::string job_id;
  std::string packet_id;
  std::string packet_path;
  std::string config_hash;
  std::uint64_t sequence = 0;  // submission order
  Stage stage = Stage::Queued;
  std::map<std::string, int> attempts;
  std::map<std::string, std::string> outputs;  // stage name -> file name within the job directory
  std::string created_at;
  std::string updated_at;
  std::vector<std::string> errors;
};

json to_json(const JobRecord& record);
JobRecord job_record_from_json(const json& doc);

struct DeadLetterRecord {
  std::string job_id;
  std::string stage;
  std::string error;
  int attempts = 0;
  std::string timestamp;
  std::string payload_ref;
};

json to_json(const DeadLetterRecord& record);

struct CompletionEvent {
  std::string job_id;
  std::string packet_id;
  std::string status;
  std::vector<std::string> result_locations;
  json confidence_summary = json::object();
  json determinations_summary = json::object();
  json timings = json::object();
};

json to_json(const CompletionEvent& event);

// Raised by fault hooks to emulate the process dying at a persistence boundary.
class SimulatedCrash : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Directory layout:
//   jobs/<job_id>/record
//   jobs/<job_id>/stage_<name>.out
//   dead_letter/<job_id>
//   events.log          one CompletionEvent per line
//   corrections.log     one CorrectionRecord per line
// Every file except the two logs is replaced by write-then-rename.
class JobStore {
 public:
  // Called with a boundary label ("before:<file>", "written:<file>", "renamed:<file>").
  using FaultHook = std::function<void(const std::string& boundary)>;

  explicit JobStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path job_dir(const std::string& job_id) const;
  std::filesystem::path events_log() const { return root_ / "events.log"; }
  std::filesystem::path corrections_log() const { return root_ / "corrections.log"; }

  void set_fault_hook(FaultHook hook) { fault_hook_ = std::move(hook); }

  bool exists(const std::string& job_id) const;
  // Throws JobNotFound, or ParseError when the record is corrupt.
  JobRecord load(const std::string& job_id) const;
  void save(JobRecord& record);
  std::vector<std::string> list_jobs() const;
  std::uint64_t next_sequence();

  std::filesystem::path output_path(const std::string& job_id, const std::string& stage) const;
  // `committed` runs right after the rename, before the trailing boundary.
  void write_output(const std::string& job_id, const std::string& stage, const json& doc,
                    const std::function<void()>& committed = {});
  std::optional<json> read_output(const std::string& job_id, const std::string& stage) const;

  void write_dead_letter(const DeadLetterRecord& record);
  std::optional<json> read_dead_letter(const std::string& job_id) const;

  // At most one event per job id; returns false when one was already logged.
  bool append_event(const CompletionEvent& event);
  std::vector<json> events() const;

  // Serializes writers of one job.
  std::mutex& job_mutex(const std::string& job_id);

 private:
  void atomic_write(const std::filesystem::path& path, const std::string& data,
                    const std::function<void()>& committed = {});
  void boundary(const std::string& label);

  std::filesystem::path root_;
  FaultHook fault_hook_;
  std::mutex mu_;  // guards job_mutexes_, sequence, events
  std::map<std::string, std::unique_ptr<std::mutex>> job_mutexes_;
};

}  // namespace docpipe
