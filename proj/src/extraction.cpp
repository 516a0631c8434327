#include "docpipe/extraction.hpp"

#include <chrono>
#include <regex>
#include <set>

namespace docpipe {

std::string_view to_string(Modality modality) {
  switch (modality) {
    case Modality::Ocr: return "ocr";
    case Modality::Image: return "image";
    case Modality::OcrImage: return "ocr+image";
  }
  return "ocr";
}

Modality parse_modality(std::string_view text) {
  if (text == "ocr") return Modality::Ocr;
  if (text == "image") return Modality::Image;
  if (text == "ocr+image" || text == "ocr_image") return Modality::OcrImage;
  throw ValidationError("modality: unknown value '" + std::string(text) + "'");
}

const AttributeValue* ExtractionResult::find(std::string_view name) const {
  for (const auto& a : attributes)
    if (a.name == name) return &a;
  return nullptr;
}

namespace {

std::string_view status_name(ExtractionStatus s) { return s == ExtractionStatus::Ok ? "ok" : "failed"; }

std::string_view failure_name(FailureKind k) {
  switch (k) {
    case FailureKind::None: return "none";
    case FailureKind::Structure: return "structure";
    case FailureKind::Backend: return "backend";
    case FailureKind::Input: return "input";
  }
  return "none";
}

FailureKind parse_failure(const std::string& s) {
  if (s == "structure") return FailureKind::Structure;
  if (s == "backend") return FailureKind::Backend;
  if (s == "input") return FailureKind::Input;
  return FailureKind::None;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void structure_error(const std::string& what) {
  throw StructureError("invalid output structure: " + what);
}

}  // namespace

json to_json(const AttributeValue& value) {
  json out{{"name", value.name}, {"value", value.value}, {"confidence", value.confidence}, {"provenance", value.provenance}};
  if (value.bbox) out["bbox"] = bbox_to_json(*value.bbox);
  if (value.justification) out["justification"] = *value.justification;
  if (value.reviewed) out["reviewed"] = true;
  return out;
}

AttributeValue attribute_value_from_json(const json& doc) {
  AttributeValue v;
  v.name = doc.at("name").get<std::string>();
  v.value = doc.at("value");
  v.confidence = doc.at("confidence").get<double>();
  v.provenance = doc.value("provenance", std::string("model"));
  v.reviewed = doc.value("reviewed", false);
  if (doc.contains("bbox")) v.bbox = bbox_from_json(doc.at("bbox"), v.name + ".bbox");
  if (doc.contains("justification")) v.justification = doc.at("justification").get<std::string>();
  return v;
}

json to_json(const ExtractionResult& r) {
  json attrs = json::array();
  for (const auto& a : r.attributes) attrs.push_back(to_json(a));
  return json{{"section_id", r.section_id},
              {"class_name", r.class_name},
              {"status", status_name(r.status)},
              {"failure_kind", failure_name(r.failure_kind)},
              {"failure_reason", r.failure_reason},
              {"attributes", std::move(attrs)},
              {"latency_ms", r.latency_ms},
              {"cost", r.cost},
              {"attempts", r.attempts},
              {"input_tokens", r.input_tokens},
              {"output_tokens", r.output_tokens},
              {"raw_outputs", r.raw_outputs},
              {"warnings", r.warnings}};
}

ExtractionResult extraction_result_from_json(const json& doc) {
  ExtractionResult r;
  r.section_id = doc.at("section_id").get<std::string>();
  r.class_name = doc.at("class_name").get<std::string>();
  r.status = doc.at("status").get<std::string>() == "ok" ? ExtractionStatus::Ok : ExtractionStatus::Failed;
  r.failure_kind = parse_failure(doc.value("failure_kind", std::string("none")));
  r.failure_reason = doc.value("failure_reason", std::string());
  for (const auto& a : doc.at("attributes")) r.attributes.push_back(attribute_value_from_json(a));
  r.latency_ms = doc.value("latency_ms", 0.0);
  r.cost = doc.value("cost", 0.0);
  r.attempts = doc.value("attempts", 0);
  r.input_tokens = doc.value("input_tokens", 0L);
  r.output_tokens = doc.value("output_tokens", 0L);
  r.raw_outputs = doc.value("raw_outputs", std::vector<std::string>{});
  r.warnings = doc.value("warnings", std::vector<std::string>{});
  return r;
}

PriceTable PriceTable::from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("prices: expected an object");
  std::map<std::string, Price> prices;
  for (const auto& [name, entry] : doc.items()) {
    if (!entry.is_object()) throw ValidationError("prices." + name + ": expected an object");
    Price p{entry.value("price_in", 0.0), entry.value("price_out", 0.0)};
    if (p.price_in < 0.0 || p.price_out < 0.0) throw ValidationError("prices." + name + ": negative price");
    prices.emplace(name, p);
  }
  return PriceTable(std::move(prices));
}

PriceTable PriceTable::load(const std::filesystem::path& path) { return from_json(read_document(path)); }

double PriceTable::cost(const std::string& backend, long input_tokens, long output_tokens) const {
  auto it = prices_.find(backend);
  if (it == prices_.end()) return 0.0;
  return static_cast<double>(input_tokens) / 1000.0 * it->second.price_in +
         static_cast<double>(output_tokens) / 1000.0 * it->second.price_out;
}

ModelRequest build_request(const Section& section, const DocumentPacket& packet, const ClassSchema& schema,
                           Modality modality, bool few_shot) {
  if (section.class_name != schema.class_name)
    throw ValidationError("section " + section.section_id + ": class '" + section.class_name +
                          "' does not match schema '" + schema.class_name + "'");
  ModelRequest req;
  req.section_id = section.section_id;
  req.class_name = schema.class_name;
  req.class_description = schema.description;
  req.modality = modality;
  for (const auto& a : schema.attributes) req.attributes.push_back(&a);
  if (few_shot) {
    for (const auto& a : schema.attributes)
      for (const auto& ex : a.few_shot_examples) req.few_shot.push_back({a.name, ex.input, ex.expected});
  }

  std::size_t line_count = 0;
  for (int idx : section.page_indices) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= packet.pages.size())
      throw ValidationError("section " + section.section_id + ": page " + std::to_string(idx) + " out of range");
    const Page& page = packet.pages[static_cast<std::size_t>(idx)];
    line_count += page.lines.size();
    if (uses_images(modality)) {
      if (!page.image_ref)
        throw MissingImage("section " + section.section_id + ": page " + std::to_string(idx) + " has no image_ref");
      req.image_refs.push_back(*page.image_ref);
    }
  }
  if (uses_text(modality)) {
    if (line_count == 0) throw EmptyInput("section " + section.section_id + ": no OCR text lines");
    for (int idx : section.page_indices) {
      const Page& page = packet.pages[static_cast<std::size_t>(idx)];
      req.section_text += "--- page " + std::to_string(idx) + " ---\n";
      for (const auto& line : page.lines) {
        req.lines.push_back({req.section_text.size(), line.text.size(), idx, line.bbox});
        req.section_text += line.text;
        req.section_text += '\n';
      }
    }
  }

  std::string& p = req.prompt;
  p += "Document class: " + schema.class_name + "\n";
  if (!schema.description.empty()) p += schema.description + "\n";
  p += "\nAttributes:\n";
  for (const auto* a : req.attributes) {
    p += "- " + a->name + " (" + std::string(to_string(a->kind)) + ")";
    if (!a->description.empty()) p += ": " + a->description;
    p += "\n";
    for (const auto& f : a->fields) p += "  - " + f.name + " (" + std::string(to_string(f.kind)) + ")\n";
  }
  if (!req.few_shot.empty()) {
    p += "\nExamples:\n";
    for (const auto& ex : req.few_shot) p += "[" + ex.attribute + "] " + ex.input + " => " + ex.expected.dump() + "\n";
  }
  if (uses_text(modality)) p += "\nDocument text:\n" + req.section_text;
  if (uses_images(modality)) {
    p += "\nPage images:\n";
    for (const auto& ref : req.image_refs) p += ref + "\n";
  }
  p += "\nRespond with a JSON object mapping attribute names to values.\n";
  return req;
}

std::optional<json> coerce_value(const json& raw, const AttributeSchema& attr) {
  switch (attr.kind) {
    case ValueKind::String:
    case ValueKind::Date:
      if (raw.is_string()) return std::optional<json>(std::in_place, raw);
      return std::nullopt;
    case ValueKind::Number:
      if (raw.is_number()) return json(raw.get<double>());
      if (raw.is_string()) {
        if (auto n = parse_number(raw.get<std::string>())) return json(*n);
      }
      return std::nullopt;
    case ValueKind::RecordList: {
      if (!raw.is_array()) return std::nullopt;
      json rows = json::array();
      for (const auto& row : raw) {
        if (!row.is_object()) return std::nullopt;
        json clean = json::object();
        for (const auto& field : attr.fields) {
          auto it = row.find(field.name);
          if (it == row.end() || it->is_null()) continue;
          auto v = coerce_value(*it, field);
          if (!v) return std::nullopt;
          clean[field.name] = std::move(*v);
        }
        rows.push_back(std::move(clean));
      }
      return rows;
    }
  }
  return std::nullopt;
}

ValidatedOutput validate_output(std::string_view raw, const ClassSchema& schema) {
  json doc;
  try {
    doc = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error&) {
    structure_error("response is not structured text");
  }
  if (!doc.is_object()) structure_error("top level is not a map");

  ValidatedOutput out;
  for (const auto& attr : schema.attributes) {
    auto it = doc.find(attr.name);
    if (it == doc.end() || it->is_null()) continue;
    AttributeValue v;
    v.name = attr.name;
    json value = *it;
    // Envelope form: {"value": ..., "confidence": ..., "bbox": [...], "justification": "..."}
    if (it->is_object()) {
      if (!it->contains("value")) structure_error(attr.name + ": expected a value");
      value = it->at("value");
      if (auto c = it->find("confidence"); c != it->end() && !c->is_null()) {
        if (!c->is_number() || c->get<double>() < 0.0 || c->get<double>() > 1.0)
          structure_error(attr.name + ": confidence must be a number in [0,1]");
        v.confidence = c->get<double>();
      }
      if (auto b = it->find("bbox"); b != it->end() && !b->is_null()) {
        try {
          v.bbox = bbox_from_json(*b, attr.name + ".bbox");
        } catch (const ValidationError& e) {
          structure_error(e.what());
        }
      }
      if (auto j = it->find("justification"); j != it->end() && j->is_string()) v.justification = j->get<std::string>();
      if (value.is_null()) continue;
    }
    auto coerced = coerce_value(value, attr);
    if (!coerced) structure_error(attr.name + ": expected " + std::string(to_string(attr.kind)));
    v.value = std::move(*coerced);
    out.attributes.push_back(std::move(v));
  }
  for (const auto& [key, _] : doc.items())
    if (!schema.find_attribute(key)) out.warnings.push_back("dropped unknown attribute '" + key + "'");
  return out;
}

namespace {

struct Capture {
  std::string text;
  std::size_t offset = 0;
  bool low = false;
};

std::optional<Capture> first_capture(const std::vector<MockPattern>& patterns, const std::string& text) {
  for (const auto& p : patterns) {
    std::regex re(p.regex);
    std::smatch m;
    if (std::regex_search(text, m, re) && m[1].matched)
      return Capture{trim(m[1].str()), static_cast<std::size_t>(m.position(1)), p.low_confidence};
  }
  return std::nullopt;
}

std::optional<BoundingBox> bbox_at(const ModelRequest& req, std::size_t offset) {
  for (const auto& line : req.lines)
    if (offset >= line.offset && offset < line.offset + line.length + 1) return line.bbox;
  return std::nullopt;
}

std::optional<int> page_at(const ModelRequest& req, std::size_t offset) {
  for (const auto& line : req.lines)
    if (offset >= line.offset && offset < line.offset + line.length + 1) return line.page;
  return std::nullopt;
}

json envelope(json value, double confidence, std::optional<BoundingBox> bbox, std::string justification) {
  json e{{"value", std::move(value)}, {"confidence", confidence}, {"justification", std::move(justification)}};
  if (bbox) e["bbox"] = bbox_to_json(*bbox);
  return e;
}

}  // namespace

std::string mock_extract(const ModelRequest& request, const ClassSchema& schema) {
  json out = json::object();
  const std::string& text = request.section_text;
  for (const auto& attr : schema.attributes) {
    if (attr.mock_patterns.empty()) continue;
    if (attr.kind != ValueKind::RecordList) {
      auto cap = first_capture(attr.mock_patterns, text);
      if (!cap) continue;
      auto value = coerce_value(json(cap->text), attr);
      if (!value) continue;
      const auto page = page_at(request, cap->offset);
      out[attr.name] = envelope(std::move(*value), cap->low ? kMockLowConfidence : kMockConfidence,
                                bbox_at(request, cap->offset),
                                "pattern match" + (page ? " on page " + std::to_string(*page) : std::string()));
      continue;
    }
    // Rows: every match of the first list pattern that matches at all; fields parsed per row.
    for (const auto& p : attr.mock_patterns) {
      std::regex re(p.regex);
      json rows = json::array();
      bool low = p.low_confidence;
      std::optional<BoundingBox> first_box;
      for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
        const std::smatch& m = *it;
        if (!m[1].matched) continue;
        const std::string row_text = m[1].str();
        json row = json::object();
        for (const auto& field : attr.fields) {
          auto cap = first_capture(field.mock_patterns, row_text);
          if (!cap) continue;
          auto value = coerce_value(json(cap->text), field);
          if (!value) continue;
          low = low || cap->low;
          row[field.name] = std::move(*value);
        }
        if (row.empty()) continue;
        if (!first_box) first_box = bbox_at(request, static_cast<std::size_t>(m.position(1)));
        rows.push_back(std::move(row));
      }
      if (rows.empty()) continue;
      out[attr.name] = envelope(std::move(rows), low ? kMockLowConfidence : kMockConfidence, first_box, "row pattern match");
      break;
    }
  }
  return out.dump();
}

ExtractionResult extract_section(const Section& section, const DocumentPacket& packet, const ClassSchema& schema,
                                 ExtractorBackend& backend, Modality modality, const ExtractOptions& options) {
  options.retry.validate();
  const auto start = std::chrono::steady_clock::now();
  ExtractionResult result;
  result.section_id = section.section_id;
  result.class_name = schema.class_name;
  auto finish = [&]() -> ExtractionResult {
    if (options.prices) result.cost = options.prices->cost(backend.name(), result.input_tokens, result.output_tokens);
    result.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return std::move(result);
  };
  auto fail = [&](FailureKind kind, std::string reason) {
    result.status = ExtractionStatus::Failed;
    result.failure_kind = kind;
    result.failure_reason = std::move(reason);
    result.attributes.clear();
  };

  if (schema.attributes.empty()) return finish();

  ModelRequest request;
  try {
    request = build_request(section, packet, schema, modality, options.few_shot);
  } catch (const EmptyInput& e) {
    fail(FailureKind::Input, e.what());
    return finish();
  } catch (const MissingImage& e) {
    fail(FailureKind::Input, e.what());
    return finish();
  }

  std::optional<Backoff> local_backoff;
  Backoff* backoff = options.backoff;
  if (!backoff) backoff = &local_backoff.emplace(options.retry);
  const Sleeper sleep = options.sleeper ? options.sleeper : real_sleeper();

  for (int attempt = 1; attempt <= options.retry.max_attempts; ++attempt) {
    if (attempt > 1) sleep(backoff->delay(attempt - 1));
    result.attempts = attempt;
    try {
      BackendResponse response = backend.extract(request);
      result.input_tokens += response.input_tokens;
      result.output_tokens += response.output_tokens;
      result.raw_outputs.push_back(response.raw);
      ValidatedOutput validated = validate_output(response.raw, schema);
      result.attributes = std::move(validated.attributes);
      result.warnings = std::move(validated.warnings);
      result.status = ExtractionStatus::Ok;
      result.failure_kind = FailureKind::None;
      result.failure_reason.clear();
      return finish();
    } catch (const StructureError& e) {
      fail(FailureKind::Structure, e.what());
    } catch (const BackendError& e) {
      fail(FailureKind::Backend, std::string("backend error: ") + e.what());
    }
  }
  return finish();
}

}  // namespace docpipe
