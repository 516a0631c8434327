#include "docpipe/orchestrator.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace docpipe {

namespace fs = std::filesystem;

std::string queue_for(Stage stage) {
  switch (stage) {
    case Stage::Queued:
    case Stage::Classifying: return "classify";
    case Stage::Splitting: return "split";
    case Stage::Extracting: return "extract";
    case Stage::Assessing: return "assess";
    case Stage::Validating: return "validate";
    default: return {};
  }
}

// ---------------------------------------------------------------------------
// Config

std::string EngineConfig::fingerprint() const {
  json doc{{"classes", class_config_to_json(classes)},
           {"rules", rules_source},
           {"hitl", hitl},
           {"threshold", threshold},
           {"modality", to_string(modality)},
           {"few_shot", few_shot}};
  return hex64(fnv1a64(doc.dump()));
}

void EngineConfig::validate() const {
  retry.validate();
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("threshold: must lie in [0,1]");
  if (classify_concurrency < 1) throw ValidationError("classify_concurrency: must be >= 1");
  for (const auto& [name, limit] : stage_limits) {
    if (std::find(kStageQueues.begin(), kStageQueues.end(), name) == kStageQueues.end())
      throw ValidationError("stage_limits." + name + ": unknown stage");
    if (limit < 1) throw ValidationError("stage_limits." + name + ": must be >= 1");
  }
}

namespace {

json load_ref(const json& value, const fs::path& base_dir) {
  if (value.is_string()) {
    fs::path p = value.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    return read_document(p);
  }
  return value;
}

bool parse_bool(const std::string& text, const std::string& name) {
  std::string t;
  for (char c : text) t += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  throw ValidationError(name + ": expected a boolean, got '" + text + "'");
}

double parse_double(const std::string& text, const std::string& name) {
  auto n = parse_number(text);
  if (!n) throw ValidationError(name + ": expected a number, got '" + text + "'");
  return *n;
}

}  // namespace

EngineConfig engine_config_from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ValidationError("engine config: expected an object");
  EngineConfig c;
  try {
    if (!doc.contains("classes")) throw ValidationError("classes: missing");
    c.classes = class_config_from_json(load_ref(doc["classes"], base_dir));
    if (doc.contains("rules")) {
      json rules = load_ref(doc["rules"], base_dir);
      c.rules = rules_from_json(rules, &c.classes);
      c.rules_source = rules;
    }
    if (doc.contains("prices")) c.prices = PriceTable::from_json(load_ref(doc["prices"], base_dir));
    c.hitl = doc.value("hitl", c.hitl);
    c.threshold = doc.value("threshold", c.threshold);
    if (doc.contains("modality")) c.modality = parse_modality(doc["modality"].get<std::string>());
    c.few_shot = doc.value("few_shot", c.few_shot);
    c.classify_concurrency = doc.value("classify_concurrency", c.classify_concurrency);
    if (doc.contains("retry")) {
      const json& r = doc["retry"];
      c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
      c.retry.base_delay = Millis(r.value("base_delay_ms", c.retry.base_delay.count()));
      c.retry.factor = r.value("factor", c.retry.factor);
      c.retry.jitter = r.value("jitter", c.retry.jitter);
      c.seed = r.value("seed", c.seed);
    }
    if (doc.contains("stage_limits"))
      for (const auto& [name, limit] : doc["stage_limits"].items()) c.stage_limits[name] = limit.get<int>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("engine config: ") + e.what());
  }
  c.validate();
  return c;
}

EngineConfig load_engine_config(const fs::path& path) {
  return engine_config_from_json(read_document(path), path.parent_path());
}

void apply_env_overrides(EngineConfig& c) {
  auto env = [](const char* name) -> std::optional<std::string> {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
  if (auto v = env("DOCPIPE_HITL")) c.hitl = parse_bool(*v, "DOCPIPE_HITL");
  if (auto v = env("DOCPIPE_THRESHOLD")) c.threshold = parse_double(*v, "DOCPIPE_THRESHOLD");
  if (auto v = env("DOCPIPE_MODALITY")) c.modality = parse_modality(*v);
  if (auto v = env("DOCPIPE_MAX_ATTEMPTS")) c.retry.max_attempts = static_cast<int>(parse_double(*v, "DOCPIPE_MAX_ATTEMPTS"));
  if (auto v = env("DOCPIPE_BASE_DELAY_MS")) c.retry.base_delay = Millis(parse_double(*v, "DOCPIPE_BASE_DELAY_MS"));
  if (auto v = env("DOCPIPE_RETRY_SEED")) c.seed = static_cast<std::uint64_t>(parse_double(*v, "DOCPIPE_RETRY_SEED"));
  c.validate();
}

// ---------------------------------------------------------------------------
// Engine

namespace {

const ClassSchema* schema_for(const EngineConfig& config, const std::string& class_name) {
  if (class_name == kOtherClass) return nullptr;
  return find_class(config.classes, class_name);
}

std::vector<TextLine> section_lines(const DocumentPacket& packet, const Section& section) {
  std::vector<TextLine> lines;
  for (int idx : section.page_indices)
    for (const auto& page : packet.pages)
      if (page.index == idx) lines.insert(lines.end(), page.lines.begin(), page.lines.end());
  return lines;
}

json results_to_json(const std::vector<ExtractionResult>& results) {
  json out = json::array();
  for (const auto& r : results) out.push_back(to_json(r));
  return out;
}

std::vector<ExtractionResult> results_from_json(const json& doc) {
  std::vector<ExtractionResult> out;
  for (const auto& r : doc) out.push_back(extraction_result_from_json(r));
  return out;
}

}  // namespace

Engine::Engine(EngineConfig config, fs::path store_root, std::shared_ptr<ClassifierBackend> classifier,
               std::shared_ptr<ExtractorBackend> extractor, EngineHooks hooks)
    : config_(std::move(config)),
      store_(std::move(store_root)),
      classifier_(std::move(classifier)),
      extractor_(std::move(extractor)),
      hooks_(std::move(hooks)),
      backoff_(config_.retry, config_.seed) {
  config_.validate();
  if (!classifier_ || !extractor_) throw ValidationError("engine: backends are required");
  config_hash_ = hex64(fnv1a64(config_.fingerprint() + "|" + classifier_->name() + "|" + extractor_->name()));
}

void Engine::sleep(Millis delay) const {
  if (hooks_.sleeper)
    hooks_.sleeper(delay);
  else
    real_sleeper()(delay);
}

std::string Engine::submit(const fs::path& packet_path) {
  const DocumentPacket packet = load_packet(packet_path);
  const std::string job_id = "job-" + hex64(fnv1a64(packet.packet_id + "|" + config_hash_));
  std::lock_guard lock(submit_mu_);
  if (store_.exists(job_id)) return job_id;
  JobRecord record;
  record.job_id = job_id;
  record.packet_id = packet.packet_id;
  record.packet_path = fs::absolute(packet_path).lexically_normal().string();
  record.config_hash = config_hash_;
  record.sequence = store_.next_sequence();
  record.created_at = utc_timestamp();
  store_.save(record);
  return job_id;
}

JobRecord Engine::run(const std::string& job_id) {
  for (;;) {
    const Stage s = step(job_id);
    if (is_terminal(s) || s == Stage::AwaitingReview) return status(job_id);
  }
}

Stage Engine::step(const std::string& job_id) {
  std::lock_guard lock(store_.job_mutex(job_id));
  JobRecord record = store_.load(job_id);
  try {
    switch (record.stage) {
      case Stage::Queued:
        record.stage = Stage::Classifying;
        store_.save(record);
        return record.stage;
      case Stage::Classifying: return classify(record);
      case Stage::Splitting: return split(record);
      case Stage::Extracting: return extract(record);
      case Stage::Assessing: return assess(record);
      case Stage::Validating: return validate(record);
      case Stage::AwaitingReview:
        if (store_.read_output(job_id, "review")) return resume_review(record);
        return record.stage;
      default: return record.stage;
    }
  } catch (const SimulatedCrash&) {
    throw;
  } catch (const JobNotFound&) {
    throw;
  } catch (const Error& e) {
    return fail(record, std::string(to_string(record.stage)) + ": " + e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(record, std::string(to_string(record.stage)) + ": " + e.what());
  }
}

void Engine::commit_output(JobRecord& record, Stage stage, const std::string& name, const json& doc) {
  store_.write_output(record.job_id, name, doc, [&] {
    if (hooks_.on_stage_committed) hooks_.on_stage_committed(record.job_id, stage);
  });
  record.outputs[name] = store_.output_path(record.job_id, name).filename().string();
}

Stage Engine::classify(JobRecord& record) {
  auto out = store_.read_output(record.job_id, "classifying");
  if (!out) {
    const DocumentPacket packet = load_packet(record.packet_path);
    const int max = config_.retry.max_attempts;
    json doc;
    for (int attempt = 1; attempt <= max; ++attempt) {
      if (attempt > 1) sleep(backoff_.delay(attempt - 1));
      try {
        PageClassification pc = classify_pages(packet, config_.classes, *classifier_, config_.classify_concurrency);
        json labels = json::array();
        for (const auto& l : pc.labels) labels.push_back(l.str());
        doc = json{{"status", "ok"}, {"attempts", attempt}, {"labels", labels}, {"warnings", pc.warnings}};
        break;
      } catch (const BackendError& e) {
        doc = json{{"status", "failed"}, {"attempts", attempt}, {"error", std::string("backend error: ") + e.what()}};
      }
    }
    commit_output(record, Stage::Classifying, "classifying", doc);
    out = std::move(doc);
  } else {
    record.outputs["classifying"] = store_.output_path(record.job_id, "classifying").filename().string();
  }
  const int attempts = out->value("attempts", 1);
  record.attempts["classifying"] = attempts;
  if (out->value("status", "ok") != "ok") return dead_letter(record, "classifying", out->value("error", ""), attempts);
  record.stage = Stage::Splitting;
  store_.save(record);
  return record.stage;
}

Stage Engine::split(JobRecord& record) {
  if (!store_.read_output(record.job_id, "splitting")) {
    const json labels_doc = store_.read_output(record.job_id, "classifying").value();
    std::vector<BioLabel> labels;
    for (const auto& l : labels_doc.at("labels")) labels.push_back(BioLabel::parse(l.get<std::string>()));
    const std::vector<Section> sections = decode_bio(labels);
    commit_output(record, Stage::Splitting, "splitting", json{{"sections", sections_to_json(sections)}});
  } else {
    record.outputs["splitting"] = store_.output_path(record.job_id, "splitting").filename().string();
  }
  record.attempts["splitting"] = 1;
  record.stage = Stage::Extracting;
  store_.save(record);
  return record.stage;
}

Stage Engine::extract(JobRecord& record) {
  auto out = store_.read_output(record.job_id, "extracting");
  if (!out) {
    const DocumentPacket packet = load_packet(record.packet_path);
    const auto sections = sections_from_json(store_.read_output(record.job_id, "splitting").value().at("sections"));
    ExtractOptions options;
    options.few_shot = config_.few_shot;
    options.retry = config_.retry;
    options.backoff = &backoff_;
    options.sleeper = [this](Millis d) { sleep(d); };
    options.prices = &config_.prices;
    std::vector<ExtractionResult> results;
    for (const auto& section : sections) {
      const ClassSchema* schema = schema_for(config_, section.class_name);
      if (!schema) continue;
      results.push_back(extract_section(section, packet, *schema, *extractor_, config_.modality, options));
      if (!results.back().ok()) break;
    }
    json doc{{"results", results_to_json(results)}};
    commit_output(record, Stage::Extracting, "extracting", doc);
    out = std::move(doc);
  } else {
    record.outputs["extracting"] = store_.output_path(record.job_id, "extracting").filename().string();
  }
  const auto results = results_from_json(out->at("results"));
  int attempts = 1;
  for (const auto& r : results) attempts = std::max(attempts, r.attempts);
  record.attempts["extracting"] = attempts;
  for (const auto& r : results) {
    if (r.ok()) continue;
    const std::string error = "section " + r.section_id + ": " + r.failure_reason;
    if (r.failure_kind == FailureKind::Input) return fail(record, "extracting: " + error);
    return dead_letter(record, "extracting", error, r.attempts);
  }
  record.stage = Stage::Assessing;
  store_.save(record);
  return record.stage;
}

Stage Engine::assess(JobRecord& record) {
  auto out = store_.read_output(record.job_id, "assessing");
  if (!out) {
    const DocumentPacket packet = load_packet(record.packet_path);
    const auto sections = sections_from_json(store_.read_output(record.job_id, "splitting").value().at("sections"));
    const auto results = results_from_json(store_.read_output(record.job_id, "extracting").value().at("results"));
    std::vector<ConfidenceReport> reports;
    for (const auto& r : results) {
      auto it = std::find_if(sections.begin(), sections.end(), [&](const Section& s) { return s.section_id == r.section_id; });
      std::vector<TextLine> lines;
      if (it != sections.end()) lines = section_lines(packet, *it);
      reports.push_back(docpipe::assess(r, lines, config_.threshold));
    }
    const RoutingDecision routing = route(reports, config_.hitl, config_.threshold);
    json rep = json::array();
    for (const auto& r : reports) rep.push_back(to_json(r));
    json doc{{"reports", rep}, {"routing", to_json(routing)}};
    commit_output(record, Stage::Assessing, "assessing", doc);
    out = std::move(doc);
  } else {
    record.outputs["assessing"] = store_.output_path(record.job_id, "assessing").filename().string();
  }
  record.attempts["assessing"] = 1;
  const RoutingDecision routing = routing_decision_from_json(out->at("routing"));
  record.stage = routing.outcome == RoutingOutcome::Review ? Stage::AwaitingReview : Stage::Validating;
  store_.save(record);
  return record.stage;
}

std::vector<ExtractionResult> Engine::current_results(const std::string& job_id) const {
  if (auto review = store_.read_output(job_id, "review")) return results_from_json(review->at("results"));
  if (auto ex = store_.read_output(job_id, "extracting")) return results_from_json(ex->at("results"));
  return {};
}

Stage Engine::validate(JobRecord& record) {
  if (!store_.read_output(record.job_id, "validating")) {
    const auto sections = sections_from_json(store_.read_output(record.job_id, "splitting").value().at("sections"));
    const auto results = current_results(record.job_id);
    std::vector<SectionResult> paired;
    for (const auto& r : results) {
      auto it = std::find_if(sections.begin(), sections.end(), [&](const Section& s) { return s.section_id == r.section_id; });
      if (it != sections.end()) paired.emplace_back(*it, r);
    }
    json dets = json::array();
    for (const auto& [rule_id, det] : validate_all(config_.rules, paired)) {
      json d = to_json(det);
      d["rule_id"] = rule_id;
      dets.push_back(std::move(d));
    }
    commit_output(record, Stage::Validating, "validating", json{{"determinations", dets}});
  } else {
    record.outputs["validating"] = store_.output_path(record.job_id, "validating").filename().string();
  }
  record.attempts["validating"] = 1;
  finish(record, Stage::Complete);
  return record.stage;
}

Stage Engine::dead_letter(JobRecord& record, const std::string& stage, const std::string& error, int attempts) {
  DeadLetterRecord dl;
  dl.job_id = record.job_id;
  dl.stage = stage;
  dl.error = error;
  dl.attempts = attempts;
  dl.timestamp = utc_timestamp();
  dl.payload_ref = record.packet_path;
  if (!store_.read_dead_letter(record.job_id)) store_.write_dead_letter(dl);
  if (std::find(record.errors.begin(), record.errors.end(), stage + ": " + error) == record.errors.end())
    record.errors.push_back(stage + ": " + error);
  finish(record, Stage::DeadLettered);
  return record.stage;
}

Stage Engine::fail(JobRecord& record, const std::string& error) {
  if (std::find(record.errors.begin(), record.errors.end(), error) == record.errors.end()) record.errors.push_back(error);
  finish(record, Stage::Failed);
  return record.stage;
}

void Engine::finish(JobRecord& record, Stage terminal) {
  CompletionEvent ev;
  ev.job_id = record.job_id;
  ev.packet_id = record.packet_id;
  ev.status = std::string(to_string(terminal));
  for (const auto& [name, file] : record.outputs)
    ev.result_locations.push_back(fs::relative(store_.job_dir(record.job_id) / file, store_.root()).generic_string());
  if (auto a = store_.read_output(record.job_id, "assessing")) {
    double min_conf = 1.0;
    for (const auto& r : a->at("reports")) min_conf = std::min(min_conf, r.value("min_attribute_confidence", 1.0));
    ev.confidence_summary = json{{"min_attribute_confidence", min_conf},
                                 {"flagged", a->at("routing").at("trigger_attributes").size()},
                                 {"reviewed", store_.read_output(record.job_id, "review").has_value()}};
  }
  if (auto v = store_.read_output(record.job_id, "validating")) {
    json summary{{"pass", 0}, {"fail", 0}, {"information_not_found", 0}};
    for (const auto& d : v->at("determinations")) summary[d.at("status").get<std::string>()] = summary[d.at("status").get<std::string>()].get<int>() + 1;
    ev.determinations_summary = summary;
  }
  ev.timings = json{{"created_at", record.created_at}, {"completed_at", utc_timestamp()}};
  // The event goes first: a crash between the two writes re-runs finish, and the log dedups.
  store_.append_event(ev);
  record.stage = terminal;
  store_.save(record);
}

std::vector<std::string> Engine::pending_jobs() {
  std::vector<std::pair<std::uint64_t, std::string>> pending;
  for (const auto& id : store_.list_jobs()) {
    std::lock_guard lock(store_.job_mutex(id));
    JobRecord record;
    try {
      record = store_.load(id);
    } catch (const JobNotFound&) {
      continue;  // directory without a committed record
    } catch (const ParseError& e) {
      JobRecord failed;
      failed.job_id = id;
      failed.stage = Stage::Failed;
      failed.created_at = utc_timestamp();
      failed.errors.push_back(std::string("corrupt job record: ") + e.what());
      store_.save(failed);
      continue;
    }
    const bool reviewed = record.stage == Stage::AwaitingReview && store_.read_output(id, "review");
    if (!is_terminal(record.stage) && (record.stage != Stage::AwaitingReview || reviewed))
      pending.emplace_back(record.sequence, id);
  }
  std::sort(pending.begin(), pending.end());
  std::vector<std::string> ids;
  for (auto& [seq, id] : pending) ids.push_back(std::move(id));
  return ids;
}

std::vector<std::string> Engine::resume_pending() {
  auto ids = pending_jobs();
  for (const auto& id : ids) run(id);
  return ids;
}

JobRecord Engine::submit_review(const std::string& job_id, const ReviewDecision& decision) {
  std::lock_guard lock(store_.job_mutex(job_id));
  JobRecord record = store_.load(job_id);
  if (record.stage != Stage::AwaitingReview)
    throw ReviewConflict("job " + job_id + " is " + std::string(to_string(record.stage)) + ", not awaiting_review");
  if (store_.read_output(job_id, "review")) throw ReviewConflict("job " + job_id + " already has a review decision");
  const auto results = results_from_json(store_.read_output(job_id, "extracting").value().at("results"));
  const RoutingDecision routing = routing_decision_from_json(store_.read_output(job_id, "assessing").value().at("routing"));

  for (std::size_t i = 0; i < decision.actions.size(); ++i) {
    const auto& a = decision.actions[i];
    if (std::none_of(results.begin(), results.end(), [&](const ExtractionResult& r) { return r.section_id == a.section_id; }))
      throw ValidationError("actions[" + std::to_string(i) + "].section_id: unknown section '" + a.section_id + "'");
    const bool flagged = std::any_of(routing.trigger_attributes.begin(), routing.trigger_attributes.end(),
                                     [&](const auto& f) { return f.section_id == a.section_id && f.name == a.attribute; });
    if (decision.role == Role::Reviewer && a.kind == ReviewActionKind::Override && !flagged)
      throw Unauthorized("reviewers may only override flagged attributes; " + a.section_id + "." + a.attribute + " is not flagged");
  }
  for (const auto& f : routing.trigger_attributes) {
    bool covered = std::any_of(decision.actions.begin(), decision.actions.end(), [&](const ReviewAction& a) {
      return a.section_id == f.section_id && a.attribute == f.name;
    });
    if (!covered) throw IncompleteDecision("no action for flagged attribute " + f.section_id + "." + f.name);
  }

  std::vector<ExtractionResult> updated;
  std::vector<CorrectionRecord> corrections;
  for (const auto& r : results) {
    const bool touched = std::any_of(decision.actions.begin(), decision.actions.end(),
                                     [&](const ReviewAction& a) { return a.section_id == r.section_id; });
    const ClassSchema* schema = schema_for(config_, r.class_name);
    if (!touched || !r.ok() || !schema) {
      updated.push_back(r);
      continue;
    }
    ReviewOutcome outcome = apply_review(r, *schema, decision, config_.threshold);
    outcome.record.job_id = job_id;
    updated.push_back(std::move(outcome.result));
    corrections.push_back(std::move(outcome.record));
  }

  json corr = json::array();
  for (const auto& c : corrections) corr.push_back(to_json(c));
  commit_output(record, Stage::AwaitingReview, "review",
                json{{"decision", to_json(decision)}, {"results", results_to_json(updated)}, {"corrections", corr}});
  resume_review(record);
  return record;
}

// The committed review output is authoritative; a crash after it is finished here on restart.
Stage Engine::resume_review(JobRecord& record) {
  const json review = store_.read_output(record.job_id, "review").value();
  bool logged = false;
  if (fs::exists(store_.corrections_log())) {
    std::istringstream lines(read_text_file(store_.corrections_log()));
    for (std::string line; std::getline(lines, line);) {
      const json entry = json::parse(line, nullptr, false);
      if (!entry.is_discarded() && entry.is_object() && entry.value("job_id", "") == record.job_id) {
        logged = true;
        break;
      }
    }
  }
  if (!logged) {
    std::ofstream out(store_.corrections_log(), std::ios::app | std::ios::binary);
    for (const auto& c : review.at("corrections")) out << c.dump() << '\n';
  }
  record.outputs["review"] = store_.output_path(record.job_id, "review").filename().string();
  record.stage = Stage::Validating;
  store_.save(record);
  return record.stage;
}

JobRecord Engine::status(const std::string& job_id) const { return store_.load(job_id); }

std::vector<JobRecord> Engine::jobs() const {
  std::vector<JobRecord> out;
  for (const auto& id : store_.list_jobs()) {
    try {
      out.push_back(store_.load(id));
    } catch (const Error&) {
    }
  }
  std::sort(out.begin(), out.end(), [](const JobRecord& a, const JobRecord& b) { return a.sequence < b.sequence; });
  return out;
}

json Engine::sections_view(const std::string& job_id) const {
  const JobRecord record = status(job_id);
  json doc{{"job_id", job_id}, {"stage", to_string(record.stage)}, {"sections", nullptr}};
  if (auto s = store_.read_output(job_id, "splitting")) doc["sections"] = s->at("sections");
  return doc;
}

json Engine::extraction_view(const std::string& job_id) const {
  const JobRecord record = status(job_id);
  json doc{{"job_id", job_id}, {"stage", to_string(record.stage)}, {"results", nullptr}, {"confidence", nullptr},
           {"routing", nullptr}, {"reviewed", false}};
  if (store_.read_output(job_id, "extracting")) doc["results"] = results_to_json(current_results(job_id));
  if (auto a = store_.read_output(job_id, "assessing")) {
    doc["confidence"] = a->at("reports");
    doc["routing"] = a->at("routing");
  }
  doc["reviewed"] = store_.read_output(job_id, "review").has_value();
  return doc;
}

json Engine::intermediates_view(const std::string& job_id) const {
  const JobRecord record = status(job_id);
  json doc{{"job_id", job_id},       {"stage", to_string(record.stage)}, {"ocr", nullptr},
           {"bio_labels", nullptr},  {"classification_warnings", json::array()},
           {"sections", nullptr},    {"raw_outputs", nullptr},           {"errors", record.errors}};
  try {
    const DocumentPacket packet = load_packet(record.packet_path);
    json pages = json::array();
    for (const auto& p : packet.pages) {
      json lines = json::array();
      for (const auto& l : p.lines)
        lines.push_back(json{{"text", l.text}, {"confidence", l.confidence}, {"bbox", bbox_to_json(l.bbox)}});
      json page{{"index", p.index}, {"lines", lines}};
      if (p.image_ref) page["image_ref"] = *p.image_ref;
      pages.push_back(std::move(page));
    }
    doc["ocr"] = pages;
  } catch (const std::exception& e) {
    doc["errors"].push_back(std::string("packet unavailable: ") + e.what());
  }
  if (auto c = store_.read_output(job_id, "classifying")) {
    if (c->contains("labels")) doc["bio_labels"] = c->at("labels");
    doc["classification_warnings"] = c->value("warnings", json::array());
  }
  if (auto s = store_.read_output(job_id, "splitting")) doc["sections"] = s->at("sections");
  if (auto e = store_.read_output(job_id, "extracting")) {
    json raw = json::array();
    for (const auto& r : e->at("results"))
      raw.push_back(json{{"section_id", r.at("section_id")}, {"raw_outputs", r.value("raw_outputs", json::array())},
                         {"status", r.value("status", "ok")}, {"failure_reason", r.value("failure_reason", "")}});
    doc["raw_outputs"] = raw;
  }
  if (auto dl = store_.read_dead_letter(job_id)) doc["dead_letter"] = *dl;
  return doc;
}

json Engine::determinations_view(const std::string& job_id) const {
  const JobRecord record = status(job_id);
  json doc{{"job_id", job_id}, {"stage", to_string(record.stage)}, {"determinations", nullptr}};
  if (auto v = store_.read_output(job_id, "validating")) doc["determinations"] = v->at("determinations");
  return doc;
}

json Engine::review_item(const std::string& job_id) const {
  const JobRecord record = status(job_id);
  if (record.stage != Stage::AwaitingReview) return nullptr;
  const auto results = results_from_json(store_.read_output(job_id, "extracting").value().at("results"));
  const json assessing = store_.read_output(job_id, "assessing").value();
  const RoutingDecision routing = routing_decision_from_json(assessing.at("routing"));
  std::optional<DocumentPacket> packet;
  try {
    packet = load_packet(record.packet_path);
  } catch (const std::exception&) {
  }
  std::vector<Section> sections;
  if (auto s = store_.read_output(job_id, "splitting")) sections = sections_from_json(s->at("sections"));

  json flagged = json::array();
  for (const auto& f : routing.trigger_attributes) {
    json item{{"section_id", f.section_id}, {"attribute", f.name}};
    for (const auto& r : results) {
      if (r.section_id != f.section_id) continue;
      item["class_name"] = r.class_name;
      if (const AttributeValue* v = r.find(f.name)) {
        item["value"] = v->value;
        item["confidence"] = v->confidence;
        item["justification"] = v->justification ? json(*v->justification) : json(nullptr);
        item["bbox"] = v->bbox ? bbox_to_json(*v->bbox) : json(nullptr);
        if (const ClassSchema* schema = schema_for(config_, r.class_name))
          if (const AttributeSchema* attr = schema->find_attribute(f.name)) item["kind"] = to_string(attr->kind);
      }
    }
    if (packet) {
      auto it = std::find_if(sections.begin(), sections.end(), [&](const Section& s) { return s.section_id == f.section_id; });
      if (it != sections.end()) {
        std::string excerpt;
        for (const auto& l : section_lines(*packet, *it)) excerpt += l.text + "\n";
        item["section_text"] = excerpt;
      }
    }
    flagged.push_back(std::move(item));
  }
  return json{{"job_id", job_id},
              {"packet_id", record.packet_id},
              {"updated_at", record.updated_at},
              {"threshold", routing.threshold_used},
              {"flagged", flagged}};
}

json Engine::result_document(const std::string& job_id) const {
  const JobRecord record = status(job_id);
  json doc{{"packet_id", record.packet_id},
           {"job_id", job_id},
           {"status", to_string(record.stage)},
           {"errors", record.errors},
           {"bio_labels", nullptr},
           {"sections", nullptr},
           {"extraction", nullptr},
           {"confidence", nullptr},
           {"routing", nullptr},
           {"determinations", nullptr}};
  if (auto c = store_.read_output(job_id, "classifying"))
    if (c->contains("labels")) doc["bio_labels"] = c->at("labels");
  if (auto s = store_.read_output(job_id, "splitting")) doc["sections"] = s->at("sections");
  if (store_.read_output(job_id, "extracting")) doc["extraction"] = results_to_json(current_results(job_id));
  if (auto a = store_.read_output(job_id, "assessing")) {
    doc["confidence"] = a->at("reports");
    doc["routing"] = a->at("routing");
  }
  if (auto v = store_.read_output(job_id, "validating")) doc["determinations"] = v->at("determinations");
  return doc;
}

// ---------------------------------------------------------------------------
// Worker pool

WorkerPool::WorkerPool(Engine& engine, std::map<std::string, int> limits) : engine_(engine), limits_(std::move(limits)) {
  int threads = 0;
  for (const auto& q : kStageQueues) {
    int& l = limits_[q];
    if (l < 1) l = 1;
    threads += l;
    queues_[q];
    running_[q] = 0;
    peak_[q] = 0;
  }
  for (int i = 0; i < threads; ++i) threads_.emplace_back([this] { worker(); });
}

WorkerPool::~WorkerPool() { shutdown(); }

void WorkerPool::submit(const std::string& job_id) {
  const std::string q = queue_for(engine_.status(job_id).stage);
  if (q.empty()) return;
  {
    std::lock_guard lock(mu_);
    queues_[q].push_back(job_id);
  }
  cv_.notify_all();
}

void WorkerPool::wait_idle() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] {
    if (stopping_) return true;
    for (const auto& q : kStageQueues)
      if (!queues_[q].empty() || running_[q] > 0) return false;
    return true;
  });
}

void WorkerPool::shutdown() {
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  for (auto& t : threads_)
    if (t.joinable()) t.join();
  threads_.clear();
}

std::map<std::string, int> WorkerPool::peak_concurrency() const {
  std::lock_guard lock(mu_);
  return peak_;
}

std::vector<std::pair<std::string, std::string>> WorkerPool::dispatch_log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::vector<std::string> WorkerPool::errors() const {
  std::lock_guard lock(mu_);
  return errors_;
}

void WorkerPool::worker() {
  for (;;) {
    std::string queue;
    std::string job_id;
    {
      std::unique_lock lock(mu_);
      // Later stages first, so jobs already in flight drain before new ones start.
      auto pick = [&] {
        for (auto it = kStageQueues.rbegin(); it != kStageQueues.rend(); ++it)
          if (!queues_[*it].empty() && running_[*it] < limits_[*it]) return *it;
        return std::string();
      };
      cv_.wait(lock, [&] { return stopping_ || !pick().empty(); });
      if (stopping_) return;
      queue = pick();
      job_id = queues_[queue].front();
      queues_[queue].pop_front();
      peak_[queue] = std::max(peak_[queue], ++running_[queue]);
      log_.emplace_back(queue, job_id);
    }
    std::string next;
    try {
      next = queue_for(engine_.step(job_id));
    } catch (const std::exception& e) {
      std::lock_guard lock(mu_);
      errors_.push_back(job_id + ": " + e.what());
    }
    {
      std::lock_guard lock(mu_);
      --running_[queue];
      if (!next.empty()) queues_[next].push_back(job_id);
    }
    cv_.notify_all();
  }
}

}  // namespace docpipe
