#include "docpipe/job_store.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace docpipe {

namespace fs = std::filesystem;

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Queued: return "queued";
    case Stage::Classifying: return "classifying";
    case Stage::Splitting: return "splitting";
    case Stage::Extracting: return "extracting";
    case Stage::Assessing: return "assessing";
    case Stage::AwaitingReview: return "awaiting_review";
    case Stage::Validating: return "validating";
    case Stage::Complete: return "complete";
    case Stage::Failed: return "failed";
    case Stage::DeadLettered: return "dead_lettered";
  }
  return "queued";
}

Stage parse_stage(std::string_view text) {
  for (Stage s : {Stage::Queued, Stage::Classifying, Stage::Splitting, Stage::Extracting, Stage::Assessing,
                  Stage::AwaitingReview, Stage::Validating, Stage::Complete, Stage::Failed, Stage::DeadLettered})
    if (to_string(s) == text) return s;
  throw ParseError("stage: unknown value '" + std::string(text) + "'");
}

bool is_terminal(Stage stage) {
  return stage == Stage::Complete || stage == Stage::Failed || stage == Stage::DeadLettered;
}

json to_json(const JobRecord& r) {
  return json{{"job_id", r.job_id},
              {"packet_id", r.packet_id},
              {"packet_path", r.packet_path},
              {"config_hash", r.config_hash},
              {"sequence", r.sequence},
              {"stage", to_string(r.stage)},
              {"attempts", r.attempts},
              {"outputs", r.outputs},
              {"created_at", r.created_at},
              {"updated_at", r.updated_at},
              {"errors", r.errors}};
}

JobRecord job_record_from_json(const json& doc) {
  try {
    JobRecord r;
    r.job_id = doc.at("job_id").get<std::string>();
    r.packet_id = doc.at("packet_id").get<std::string>();
    r.packet_path = doc.at("packet_path").get<std::string>();
    r.config_hash = doc.at("config_hash").get<std::string>();
    r.sequence = doc.at("sequence").get<std::uint64_t>();
    r.stage = parse_stage(doc.at("stage").get<std::string>());
    r.attempts = doc.at("attempts").get<std::map<std::string, int>>();
    r.outputs = doc.at("outputs").get<std::map<std::string, std::string>>();
    r.created_at = doc.value("created_at", std::string());
    r.updated_at = doc.value("updated_at", std::string());
    r.errors = doc.value("errors", std::vector<std::string>{});
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("job record: ") + e.what());
  }
}

json to_json(const DeadLetterRecord& r) {
  return json{{"job_id", r.job_id}, {"stage", r.stage},         {"error", r.error},
              {"attempts", r.attempts}, {"timestamp", r.timestamp}, {"payload_ref", r.payload_ref}};
}

json to_json(const CompletionEvent& e) {
  return json{{"job_id", e.job_id},
              {"packet_id", e.packet_id},
              {"status", e.status},
              {"result_locations", e.result_locations},
              {"confidence_summary", e.confidence_summary},
              {"determinations_summary", e.determinations_summary},
              {"timings", e.timings}};
}

JobStore::JobStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "jobs");
  fs::create_directories(root_ / "dead_letter");
}

fs::path JobStore::job_dir(const std::string& job_id) const { return root_ / "jobs" / job_id; }

void JobStore::boundary(const std::string& label) {
  if (fault_hook_) fault_hook_(label);
}

void JobStore::atomic_write(const fs::path& path, const std::string& data, const std::function<void()>& committed) {
  const std::string rel = fs::relative(path, root_).generic_string();
  boundary("before:" + rel);
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(tmp.string() + ": cannot write");
    out << data;
    out.flush();
    if (!out) throw Error(tmp.string() + ": write failed");
  }
  boundary("written:" + rel);
  fs::rename(tmp, path);
  if (committed) committed();
  boundary("renamed:" + rel);
}

bool JobStore::exists(const std::string& job_id) const { return fs::exists(job_dir(job_id) / "record"); }

JobRecord JobStore::load(const std::string& job_id) const {
  const fs::path path = job_dir(job_id) / "record";
  if (!fs::exists(path)) throw JobNotFound("job " + job_id + " not found");
  return job_record_from_json(read_document(path));
}

void JobStore::save(JobRecord& record) {
  record.updated_at = utc_timestamp();
  atomic_write(job_dir(record.job_id) / "record", to_json(record).dump(2));
}

std::vector<std::string> JobStore::list_jobs() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_ / "jobs"))
    if (entry.is_directory()) ids.push_back(entry.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::uint64_t JobStore::next_sequence() {
  std::lock_guard lock(mu_);
  std::uint64_t next = 0;
  for (const auto& id : list_jobs()) {
    try {
      next = std::max(next, load(id).sequence + 1);
    } catch (const Error&) {
    }
  }
  return next;
}

fs::path JobStore::output_path(const std::string& job_id, const std::string& stage) const {
  return job_dir(job_id) / ("stage_" + stage + ".out");
}

void JobStore::write_output(const std::string& job_id, const std::string& stage, const json& doc,
                            const std::function<void()>& committed) {
  atomic_write(output_path(job_id, stage), doc.dump(2), committed);
}

std::optional<json> JobStore::read_output(const std::string& job_id, const std::string& stage) const {
  const fs::path path = output_path(job_id, stage);
  if (!fs::exists(path)) return std::nullopt;
  return read_document(path);
}

void JobStore::write_dead_letter(const DeadLetterRecord& record) {
  atomic_write(root_ / "dead_letter" / record.job_id, to_json(record).dump(2));
}

std::optional<json> JobStore::read_dead_letter(const std::string& job_id) const {
  const fs::path path = root_ / "dead_letter" / job_id;
  if (!fs::exists(path)) return std::nullopt;
  return read_document(path);
}

bool JobStore::append_event(const CompletionEvent& event) {
  std::lock_guard lock(mu_);
  for (const auto& e : events())
    if (e.value("job_id", std::string()) == event.job_id) return false;
  boundary("before:events.log");
  {
    std::ofstream out(events_log(), std::ios::app | std::ios::binary);
    if (!out) throw Error(events_log().string() + ": cannot append");
    out << to_json(event).dump() << '\n';
  }
  boundary("appended:events.log");
  return true;
}

std::vector<json> JobStore::events() const {
  std::vector<json> out;
  std::ifstream in(events_log(), std::ios::binary);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      // torn trailing line
    }
  }
  return out;
}

std::mutex& JobStore::job_mutex(const std::string& job_id) {
  std::lock_guard lock(mu_);
  auto& slot = job_mutexes_[job_id];
  if (!slot) slot = std::make_unique<std::mutex>();
  return *slot;
}

}  // namespace docpipe
