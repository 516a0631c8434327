#include "docpipe/batch.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "docpipe/backends.hpp"

namespace docpipe {

namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string trim_copy(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() ? (base / path).lexically_normal() : path;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot write");
  out << text;
}

}  // namespace

Manifest load_manifest(const fs::path& path, bool check_files) {
  Manifest m;
  m.source = path;
  const fs::path base = path.parent_path();
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  auto row_error = [&](std::size_t row, const std::string& msg) {
    return ConfigError(path.string() + ": row " + std::to_string(row) + ": " + msg);
  };

  std::vector<std::map<std::string, std::string>> raw;
  if (path.extension() == ".csv") {
    std::vector<std::vector<std::string>> table;
    try {
      table = parse_csv(text);
    } catch (const ParseError& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    if (table.empty()) throw ConfigError(path.string() + ": empty manifest");
    std::vector<std::string> header;
    for (const auto& h : table.front()) header.push_back(trim_copy(h));
    if (std::find(header.begin(), header.end(), "document_path") == header.end())
      throw ConfigError(path.string() + ": header must name a document_path column");
    for (std::size_t r = 1; r < table.size(); ++r) {
      if (table[r].size() != header.size())
        throw row_error(r, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(table[r].size()));
      std::map<std::string, std::string> fields;
      for (std::size_t c = 0; c < header.size(); ++c) fields[header[c]] = trim_copy(table[r][c]);
      raw.push_back(std::move(fields));
    }
  } else {
    json doc;
    try {
      doc = parse_document(text, path.string());
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
    if (doc.is_object() && doc.contains("rows")) doc = doc["rows"];
    if (!doc.is_array()) throw ConfigError(path.string() + ": expected a list of rows");
    for (std::size_t r = 0; r < doc.size(); ++r) {
      if (!doc[r].is_object()) throw row_error(r + 1, "expected an object");
      std::map<std::string, std::string> fields;
      for (const auto& [k, v] : doc[r].items()) {
        if (!v.is_string()) throw row_error(r + 1, k + ": expected a string");
        fields[k] = v.get<std::string>();
      }
      raw.push_back(std::move(fields));
    }
  }

  std::set<std::string> config_refs;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& fields = raw[i];
    ManifestRow row;
    row.row = i + 1;
    const std::string doc_path = fields["document_path"];
    if (doc_path.empty()) throw row_error(row.row, "document_path: missing");
    row.document_path = resolve(base, doc_path);
    if (check_files && !fs::exists(row.document_path))
      throw row_error(row.row, "document_path: '" + doc_path + "' does not exist");
    if (auto it = fields.find("ground_truth_path"); it != fields.end() && !it->second.empty()) {
      row.ground_truth_path = resolve(base, it->second);
      if (check_files && !fs::exists(*row.ground_truth_path))
        throw row_error(row.row, "ground_truth_path: '" + it->second + "' does not exist");
    }
    if (auto it = fields.find("config_ref"); it != fields.end() && !it->second.empty()) {
      row.config_ref = resolve(base, it->second).string();
      config_refs.insert(*row.config_ref);
    }
    m.rows.push_back(std::move(row));
  }
  if (config_refs.size() > 1) throw ConfigError(path.string() + ": at most one config_ref per manifest");
  if (!config_refs.empty()) m.config_ref = *config_refs.begin();
  return m;
}

json predicted_attributes(const ExtractionResult& result, const ClassSchema* schema) {
  json out = json::object();
  for (const auto& a : result.attributes) {
    const AttributeSchema* attr = schema ? schema->find_attribute(a.name) : nullptr;
    if (attr && attr->comparator.kind == ComparatorKind::BboxIou) {
      if (a.bbox) out[a.name] = bbox_to_json(*a.bbox);
      continue;
    }
    out[a.name] = a.value;
  }
  return out;
}

PacketScore score_packet(const json& doc, const GroundTruth& truth, const ClassConfig& classes) {
  PacketScore score;
  score.packet_id = truth.packet_id;
  std::vector<Section> sections;
  if (doc.contains("sections") && doc["sections"].is_array()) sections = sections_from_json(doc["sections"]);
  std::map<std::string, ExtractionResult> results;
  if (doc.contains("extraction") && doc["extraction"].is_array())
    for (const auto& r : doc["extraction"]) {
      ExtractionResult res = extraction_result_from_json(r);
      results.emplace(res.section_id, std::move(res));
    }

  std::vector<bool> used(sections.size(), false);
  for (const auto& t : truth.sections) {
    if (t.class_name == kOtherClass) continue;
    const ClassSchema* schema = find_class(classes, t.class_name);
    if (!schema) continue;
    json predicted = json::object();
    for (std::size_t i = 0; i < sections.size(); ++i) {
      if (used[i] || sections[i].class_name != t.class_name || sections[i].page_indices != t.pages) continue;
      used[i] = true;
      if (auto it = results.find(sections[i].section_id); it != results.end() && it->second.ok())
        predicted = predicted_attributes(it->second, schema);
      break;
    }
    score.documents.push_back(evaluate_document(t.attributes, predicted, *schema));
  }
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (used[i] || sections[i].class_name == kOtherClass) continue;
    const ClassSchema* schema = find_class(classes, sections[i].class_name);
    auto it = results.find(sections[i].section_id);
    if (!schema || it == results.end() || !it->second.ok()) continue;
    score.documents.push_back(evaluate_document(json::object(), predicted_attributes(it->second, schema), *schema));
  }

  if (!sections.empty()) {
    std::size_t page_count = 0;
    for (const auto& t : truth.sections) page_count += t.pages.size();
    const auto predicted = to_labeled(sections);
    try {
      score.split = split_metrics(truth.sections, predicted, page_count, truth.packet_id);
    } catch (const PartitionError& e) {
      std::cerr << "warning: " << truth.packet_id << ": split metrics skipped: " << e.what() << "\n";
    }
  }
  return score;
}

json to_json(const RunReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back(json{{"backend", r.backend},
                        {"modality", to_string(r.modality)},
                        {"modalities", {{"ocr", uses_text(r.modality)}, {"image", uses_images(r.modality)}}},
                        {"packets", r.packets},
                        {"complete", r.complete},
                        {"awaiting_review", r.awaiting_review},
                        {"failed", r.failed()},
                        {"failed_extraction", r.failed_extraction},
                        {"dead_lettered", r.dead_lettered},
                        {"extraction_score", r.extraction_score ? json(*r.extraction_score) : json(nullptr)},
                        {"mean_latency_ms", r.mean_latency_ms},
                        {"total_cost", r.total_cost}});
  }
  return json{{"rows", rows},
              {"evaluation", report.evaluation ? to_json(*report.evaluation) : json(nullptr)},
              {"split", report.split ? to_json(*report.split) : json(nullptr)},
              {"missing_baselines", report.missing_baselines}};
}

std::string render_table(const RunReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(16) << "Backend" << std::setw(14) << "Modalities" << std::setw(18) << "Extraction Score"
     << std::setw(14) << "Latency (ms)" << std::setw(12) << "Cost ($)" << "Failed\n";
  for (const auto& r : report.rows) {
    std::string modalities = uses_text(r.modality) ? "OCR" : "";
    if (uses_images(r.modality)) modalities += modalities.empty() ? "Image" : "+Image";
    std::ostringstream score;
    if (r.extraction_score)
      score << std::fixed << std::setprecision(4) << *r.extraction_score;
    else
      score << "-";
    os << std::left << std::setw(16) << r.backend << std::setw(14) << modalities << std::setw(18) << score.str()
       << std::fixed << std::setprecision(2) << std::setw(14) << r.mean_latency_ms << std::setprecision(4)
       << std::setw(12) << r.total_cost << r.failed() << "\n";
  }
  if (report.split) {
    os << std::fixed << std::setprecision(4) << "\nSplit  page accuracy " << report.split->page_accuracy
       << "  ordered " << report.split->ordered_accuracy << "  unordered " << report.split->unordered_accuracy << "\n";
  }
  if (!report.missing_baselines.empty()) {
    os << "\nMissing baselines:";
    for (const auto& m : report.missing_baselines) os << " " << m;
    os << "\n";
  }
  return os.str();
}

json mask_latency(json doc) {
  if (doc.is_object()) {
    for (auto& [key, value] : doc.items()) {
      if (key.size() >= 10 && key.compare(key.size() - 10, 10, "latency_ms") == 0)
        value = nullptr;
      else
        value = mask_latency(std::move(value));
    }
  } else if (doc.is_array()) {
    for (auto& v : doc) v = mask_latency(std::move(v));
  }
  return doc;
}

RunRow summarize_results(const std::vector<json>& docs, const std::string& backend, Modality modality) {
  RunRow row;
  row.backend = backend;
  row.modality = modality;
  std::size_t latency_packets = 0;
  double latency_sum = 0.0;
  for (const auto& doc : docs) {
    ++row.packets;
    const Stage stage = parse_stage(doc.at("status").get<std::string>());
    if (stage == Stage::Complete) ++row.complete;
    if (stage == Stage::AwaitingReview) ++row.awaiting_review;
    if (stage == Stage::Failed) ++row.failed_extraction;
    if (stage == Stage::DeadLettered) ++row.dead_lettered;
    if (!doc.contains("extraction") || !doc["extraction"].is_array()) continue;
    for (const auto& r : doc["extraction"]) {
      latency_sum += r.value("latency_ms", 0.0);
      row.total_cost += r.value("cost", 0.0);
    }
    ++latency_packets;
  }
  if (latency_packets > 0) row.mean_latency_ms = latency_sum / static_cast<double>(latency_packets);
  return row;
}

namespace {

struct Scored {
  EvaluationReport evaluation;
  std::optional<SplitReport> split;
  bool any = false;
};

Scored score_all(const std::vector<std::pair<json, GroundTruth>>& pairs, const ClassConfig& classes,
                 std::size_t failed_count) {
  Scored out;
  std::vector<FieldCounts> documents;
  std::vector<PacketSplit> splits;
  for (const auto& [doc, truth] : pairs) {
    PacketScore s = score_packet(doc, truth, classes);
    documents.insert(documents.end(), s.documents.begin(), s.documents.end());
    if (s.split) splits.push_back(*s.split);
  }
  out.any = !documents.empty();
  out.evaluation = aggregate(documents, failed_count);
  if (!splits.empty()) out.split = aggregate_split(std::move(splits));
  return out;
}

bool is_failure(const json& doc) {
  const std::string status = doc.value("status", "");
  return status == to_string(Stage::Failed) || status == to_string(Stage::DeadLettered);
}

}  // namespace

ProcessOutcome process(const ProcessOptions& options) {
  Manifest manifest;
  EngineConfig config;
  try {
    manifest = load_manifest(options.manifest);
    fs::path config_path;
    if (options.config)
      config_path = *options.config;
    else if (manifest.config_ref)
      config_path = *manifest.config_ref;
    else
      throw ValidationError("no engine config given and the manifest has no config_ref");
    config = load_engine_config(config_path);
    apply_env_overrides(config);
    if (options.modality) config.modality = *options.modality;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  std::shared_ptr<ExtractorBackend> extractor;
  std::shared_ptr<ClassifierBackend> classifier;
  try {
    extractor = make_extractor(options.backend, config.classes);
    classifier = make_classifier(options.backend);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  Engine engine(config, options.out / "store", classifier, extractor, options.hooks);
  ProcessOutcome outcome;
  std::map<std::string, std::optional<fs::path>> truth_by_job;
  for (const auto& row : manifest.rows) {
    std::string id;
    try {
      id = engine.submit(row.document_path);
    } catch (const Error& e) {
      throw ConfigError(manifest.source.string() + ": row " + std::to_string(row.row) + ": " + e.what());
    }
    if (std::find(outcome.job_ids.begin(), outcome.job_ids.end(), id) == outcome.job_ids.end()) {
      outcome.job_ids.push_back(id);
      truth_by_job[id] = row.ground_truth_path;
    }
  }

  {
    WorkerPool pool(engine, config.stage_limits);
    for (const auto& id : engine.pending_jobs()) pool.submit(id);
    pool.wait_idle();
    pool.shutdown();
    for (const auto& e : pool.errors()) std::cerr << "error: " << e << "\n";
  }

  const fs::path results_dir = options.out / "results";
  fs::create_directories(results_dir);
  write_text(results_dir / "_classes.json", class_config_to_json(config.classes).dump(2) + "\n");

  std::vector<json> docs;
  std::vector<std::pair<json, GroundTruth>> scored;
  for (const auto& id : outcome.job_ids) {
    json doc = engine.result_document(id);
    write_text(results_dir / (doc.at("packet_id").get<std::string>() + ".json"), doc.dump(2) + "\n");
    const auto& truth_path = truth_by_job[id];
    if (!truth_path)
      outcome.report.missing_baselines.push_back(doc.at("packet_id").get<std::string>());
    else if (!is_failure(doc))
      scored.emplace_back(doc, load_ground_truth(*truth_path, &config.classes));
    docs.push_back(std::move(doc));
  }
  RunRow row = summarize_results(docs, options.backend, config.modality);

  const bool any_truth = std::any_of(manifest.rows.begin(), manifest.rows.end(),
                                     [](const ManifestRow& r) { return r.ground_truth_path.has_value(); });
  if (!any_truth) outcome.report.missing_baselines.clear();
  if (any_truth) {
    Scored s = score_all(scored, config.classes, row.failed());
    if (s.any) row.extraction_score = s.evaluation.extraction_score;
    outcome.report.evaluation = s.evaluation;
    outcome.report.split = s.split;
  }
  outcome.report.rows.push_back(row);

  write_text(options.out / "run_report.json", to_json(outcome.report).dump(2) + "\n");
  write_text(options.out / "run_report.txt", render_table(outcome.report));
  outcome.exit_code = row.failed() > 0 ? 1 : 0;
  return outcome;
}

EvaluateOutcome evaluate_run(const EvaluateOptions& options) {
  ClassConfig classes;
  Manifest manifest;
  try {
    classes = load_class_config(options.classes ? *options.classes : options.results / "_classes.json");
    manifest = load_manifest(options.baselines, false);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }

  std::map<std::string, json> results;
  for (const auto& entry : fs::directory_iterator(options.results)) {
    const fs::path p = entry.path();
    if (p.extension() != ".json" || p.filename().string().rfind('_', 0) == 0) continue;
    json doc = read_document(p);
    std::string packet_id = doc.at("packet_id").get<std::string>();
    results[packet_id] = std::move(doc);
  }

  std::map<std::string, GroundTruth> truths;
  for (const auto& row : manifest.rows) {
    if (!row.ground_truth_path) continue;
    if (!fs::exists(*row.ground_truth_path)) {
      std::cerr << "warning: row " << row.row << ": baseline " << row.ground_truth_path->string() << " not found\n";
      continue;
    }
    GroundTruth t = load_ground_truth(*row.ground_truth_path, &classes);
    truths[t.packet_id] = std::move(t);
  }

  EvaluateOutcome outcome;
  std::vector<std::pair<json, GroundTruth>> pairs;
  std::size_t failed = 0;
  for (const auto& [packet_id, doc] : results) {
    auto it = truths.find(packet_id);
    if (it == truths.end()) {
      std::cerr << "warning: MissingBaseline: " << packet_id << "\n";
      outcome.missing_baselines.push_back(packet_id);
      continue;
    }
    if (is_failure(doc)) {
      ++failed;
      continue;
    }
    pairs.emplace_back(doc, it->second);
  }
  for (const auto& [packet_id, t] : truths)
    if (!results.count(packet_id)) {
      std::cerr << "warning: no result for baseline " << packet_id << "\n";
      outcome.missing_results.push_back(packet_id);
    }

  Scored s = score_all(pairs, classes, failed);
  outcome.evaluation = s.evaluation;
  outcome.split = s.split;

  json report = to_json(outcome.evaluation);
  report["missing_baselines"] = outcome.missing_baselines;
  report["missing_results"] = outcome.missing_results;
  write_text(options.out / "evaluation_report.json", report.dump(2) + "\n");
  std::string table = render_table(outcome.evaluation);
  if (!outcome.missing_baselines.empty()) {
    table += "\nMissing baselines:";
    for (const auto& m : outcome.missing_baselines) table += " " + m;
    table += "\n";
  }
  write_text(options.out / "evaluation_report.txt", table);
  write_text(options.out / "split_report.json", (outcome.split ? to_json(*outcome.split) : json(nullptr)).dump(2) + "\n");
  return outcome;
}

}  // namespace docpipe
