#include "docpipe/assessment.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <set>

namespace docpipe {

json to_json(const ConfidenceReport& report) {
  json entries = json::array();
  for (const auto& e : report.entries)
    entries.push_back({{"name", e.name}, {"confidence", e.confidence}, {"flagged", e.flagged}, {"justification", e.justification}});
  json out{{"section_id", report.section_id},
           {"entries", std::move(entries)},
           {"min_attribute_confidence", report.min_attribute_confidence},
           {"threshold", report.threshold}};
  if (report.ocr) out["ocr_summary"] = {{"min", report.ocr->min}, {"mean", report.ocr->mean}, {"lines", report.ocr->lines}};
  return out;
}

ConfidenceReport confidence_report_from_json(const json& doc) {
  ConfidenceReport r;
  r.section_id = doc.at("section_id").get<std::string>();
  for (const auto& e : doc.at("entries"))
    r.entries.push_back({e.at("name").get<std::string>(), e.at("confidence").get<double>(), e.at("flagged").get<bool>(),
                         e.value("justification", std::string())});
  r.min_attribute_confidence = doc.at("min_attribute_confidence").get<double>();
  r.threshold = doc.at("threshold").get<double>();
  if (doc.contains("ocr_summary")) {
    const json& o = doc.at("ocr_summary");
    r.ocr = OcrSummary{o.at("min").get<double>(), o.at("mean").get<double>(), o.at("lines").get<std::size_t>()};
  }
  return r;
}

ConfidenceReport assess(const ExtractionResult& result, std::span<const TextLine> lines, double threshold) {
  if (!result.ok()) throw AssessOnFailed("section " + result.section_id + ": cannot assess a failed extraction");
  ConfidenceReport report;
  report.section_id = result.section_id;
  report.threshold = threshold;
  for (const auto& a : result.attributes) {
    report.entries.push_back({a.name, a.confidence, a.confidence < threshold, a.justification.value_or("")});
    report.min_attribute_confidence = std::min(report.min_attribute_confidence, a.confidence);
  }
  if (!lines.empty()) {
    OcrSummary summary{1.0, 0.0, lines.size()};
    for (const auto& line : lines) {
      const double c = line.confidence / 100.0;
      summary.min = std::min(summary.min, c);
      summary.mean += c;
    }
    summary.mean /= static_cast<double>(lines.size());
    report.ocr = summary;
  }
  return report;
}

json to_json(const RoutingDecision& decision) {
  json triggers = json::array();
  for (const auto& t : decision.trigger_attributes) triggers.push_back({{"section_id", t.section_id}, {"name", t.name}});
  return json{{"outcome", decision.outcome == RoutingOutcome::Review ? "review" : "auto_approve"},
              {"trigger_attributes", std::move(triggers)},
              {"threshold_used", decision.threshold_used}};
}

RoutingDecision routing_decision_from_json(const json& doc) {
  RoutingDecision d;
  d.outcome = doc.at("outcome").get<std::string>() == "review" ? RoutingOutcome::Review : RoutingOutcome::AutoApprove;
  for (const auto& t : doc.at("trigger_attributes"))
    d.trigger_attributes.push_back({t.at("section_id").get<std::string>(), t.at("name").get<std::string>()});
  d.threshold_used = doc.at("threshold_used").get<double>();
  return d;
}

RoutingDecision route(const ConfidenceReport& report, bool hitl_enabled, double threshold) {
  return route(std::span<const ConfidenceReport>(&report, 1), hitl_enabled, threshold);
}

RoutingDecision route(std::span<const ConfidenceReport> reports, bool hitl_enabled, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ValidationError("threshold: must lie in [0,1]");
  RoutingDecision decision;
  decision.threshold_used = threshold;
  for (const auto& report : reports)
    for (const auto& e : report.entries)
      if (e.confidence < threshold) decision.trigger_attributes.push_back({report.section_id, e.name});
  decision.outcome = hitl_enabled && !decision.trigger_attributes.empty() ? RoutingOutcome::Review
                                                                           : RoutingOutcome::AutoApprove;
  return decision;
}

std::string_view to_string(Role role) { return role == Role::Admin ? "admin" : "reviewer"; }

Role parse_role(std::string_view text) {
  if (text == "admin") return Role::Admin;
  if (text == "reviewer") return Role::Reviewer;
  throw ValidationError("role: unknown value '" + std::string(text) + "'");
}

json to_json(const ReviewDecision& decision) {
  json actions = json::array();
  for (const auto& a : decision.actions) {
    json aj{{"section_id", a.section_id},
            {"attribute", a.attribute},
            {"action", a.kind == ReviewActionKind::Accept ? "accept" : "override"}};
    if (a.kind == ReviewActionKind::Override) aj["value"] = a.value;
    actions.push_back(std::move(aj));
  }
  return json{{"reviewer", decision.reviewer},
              {"role", to_string(decision.role)},
              {"actions", std::move(actions)},
              {"timestamp", decision.timestamp}};
}

ReviewDecision review_decision_from_json(const json& doc) {
  if (!doc.is_object()) throw ValidationError("decision: expected an object");
  ReviewDecision d;
  d.reviewer = doc.value("reviewer", std::string());
  d.role = parse_role(doc.value("role", std::string("reviewer")));
  d.timestamp = doc.value("timestamp", std::string());
  if (!doc.contains("actions") || !doc["actions"].is_array()) throw ValidationError("decision.actions: expected a list");
  for (const auto& aj : doc["actions"]) {
    if (!aj.is_object() || !aj.contains("attribute") || !aj["attribute"].is_string())
      throw ValidationError("decision.actions: each action needs an attribute");
    ReviewAction a;
    a.section_id = aj.value("section_id", std::string());
    a.attribute = aj["attribute"].get<std::string>();
    const std::string kind = aj.value("action", std::string("accept"));
    if (kind == "accept") {
      a.kind = ReviewActionKind::Accept;
    } else if (kind == "override") {
      a.kind = ReviewActionKind::Override;
      if (!aj.contains("value")) throw ValidationError("decision.actions: override of '" + a.attribute + "' needs a value");
      a.value = aj["value"];
    } else {
      throw ValidationError("decision.actions: unknown action '" + kind + "'");
    }
    d.actions.push_back(std::move(a));
  }
  return d;
}

json to_json(const CorrectionRecord& record) {
  json changes = json::array();
  for (const auto& c : record.changes)
    changes.push_back({{"attribute", c.attribute}, {"action", c.action}, {"old", c.old_value}, {"new", c.new_value}});
  return json{{"job_id", record.job_id},
              {"section_id", record.section_id},
              {"reviewer", record.reviewer},
              {"role", to_string(record.role)},
              {"timestamp", record.timestamp},
              {"changes", std::move(changes)}};
}

ReviewOutcome apply_review(const ExtractionResult& result, const ClassSchema& schema, const ReviewDecision& decision,
                           double threshold) {
  ReviewOutcome outcome{result, {}};
  outcome.record.section_id = result.section_id;
  outcome.record.reviewer = decision.reviewer;
  outcome.record.role = decision.role;
  outcome.record.timestamp = decision.timestamp.empty() ? utc_timestamp() : decision.timestamp;

  std::map<std::string, const ReviewAction*> actions;
  for (const auto& a : decision.actions) {
    if (a.section_id != result.section_id) continue;
    if (!actions.emplace(a.attribute, &a).second)
      throw IncompleteDecision("attribute '" + a.attribute + "' has more than one action");
  }
  for (const auto& attr : result.attributes)
    if (attr.confidence < threshold && !actions.count(attr.name))
      throw IncompleteDecision("flagged attribute '" + attr.name + "' in " + result.section_id + " has no action");

  // Validate everything before mutating anything.
  for (const auto& [name, action] : actions) {
    const AttributeSchema* attr_schema = schema.find_attribute(name);
    if (!attr_schema) throw ValidationError("attribute '" + name + "' is not part of class '" + schema.class_name + "'");
    const AttributeValue* current = result.find(name);
    const bool flagged = current && current->confidence < threshold;
    if (action->kind == ReviewActionKind::Override) {
      if (!flagged && decision.role != Role::Admin)
        throw Unauthorized("reviewer role cannot override unflagged attribute '" + name + "'");
      if (!coerce_value(action->value, *attr_schema))
        throw KindMismatch("override of '" + name + "' is not a valid " + std::string(to_string(attr_schema->kind)));
    } else if (!current) {
      throw ValidationError("cannot accept absent attribute '" + name + "'");
    }
  }

  for (const auto& [name, action] : actions) {
    const AttributeSchema& attr_schema = *schema.find_attribute(name);
    auto it = std::find_if(outcome.result.attributes.begin(), outcome.result.attributes.end(),
                           [&](const AttributeValue& v) { return v.name == name; });
    if (action->kind == ReviewActionKind::Override) {
      json new_value = *coerce_value(action->value, attr_schema);
      json old_value = it == outcome.result.attributes.end() ? json() : it->value;
      if (it == outcome.result.attributes.end()) {
        outcome.result.attributes.push_back({name, {}, 1.0, std::nullopt, std::nullopt, "human", true});
        it = std::prev(outcome.result.attributes.end());
      }
      it->value = new_value;
      it->confidence = 1.0;
      it->provenance = "human";
      it->reviewed = true;
      it->justification = "override by " + decision.reviewer;
      outcome.record.changes.push_back({name, "override", std::move(old_value), std::move(new_value)});
    } else {
      // Accepting an unflagged attribute changes nothing.
      if (it->confidence < threshold) {
        it->confidence = 1.0;
        it->reviewed = true;
      }
      outcome.record.changes.push_back({name, "accept", it->value, it->value});
    }
  }
  return outcome;
}

void append_correction(const std::filesystem::path& log, const CorrectionRecord& record) {
  if (log.has_parent_path()) std::filesystem::create_directories(log.parent_path());
  std::ofstream out(log, std::ios::app | std::ios::binary);
  if (!out) throw Error(log.string() + ": cannot open correction log");
  out << to_json(record).dump() << '\n';
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace docpipe
