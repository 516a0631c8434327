#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docpipe/extraction.hpp"

namespace docpipe {

struct ConfidenceEntry {
  std::string name;
  double confidence = 1.0;
  bool flagged = false;
  std::string justification;
};

// Line confidences rescaled from percent to [0,1].
struct OcrSummary {
  double min = 1.0;
  double mean = 1.0;
  std::size_t lines = 0;
};

struct ConfidenceReport {
  std::string section_id;
  std::vector<ConfidenceEntry> entries;
  std::optional<OcrSummary> ocr;
  double min_attribute_confidence = 1.0;
  double threshold = kDefaultConfidenceThreshold;
};

json to_json(const ConfidenceReport& report);
ConfidenceReport confidence_report_from_json(const json& doc);

// Flagging is strict: confidence < threshold.
ConfidenceReport assess(const ExtractionResult& result, std::span<const TextLine> lines,
                        double threshold = kDefaultConfidenceThreshold);

struct FlaggedAttribute {
  std::string section_id;
  std::string name;

  bool operator==(const FlaggedAttribute&) const = default;
};

enum class RoutingOutcome { AutoApprove, Review };

struct RoutingDecision {
  RoutingOutcome outcome = RoutingOutcome::AutoApprove;
  std::vector<FlaggedAttribute> trigger_attributes;
  double threshold_used = kDefaultConfidenceThreshold;
};

json to_json(const RoutingDecision& decision);
RoutingDecision routing_decision_from_json(const json& doc);

RoutingDecision route(const ConfidenceReport& report, bool hitl_enabled, double threshold);
// Job-level routing over every section's report.
RoutingDecision route(std::span<const ConfidenceReport> reports, bool hitl_enabled, double threshold);

enum class Role { Admin, Reviewer };
std::string_view to_string(Role role);
Role parse_role(std::string_view text);

enum class ReviewActionKind { Accept, Override };

struct ReviewAction {
  std::string section_id;
  std::string attribute;
  ReviewActionKind kind = ReviewActionKind::Accept;
  json value;  // Override only
};

struct ReviewDecision {
  std::string reviewer;
  Role role = Role::Reviewer;
  std::vector<ReviewAction> actions;
  std::string timestamp;
};

json to_json(const ReviewDecision& decision);
ReviewDecision review_decision_from_json(const json& doc);

struct CorrectionChange {
  std::string attribute;
  std::string action;  // "accept" | "override"
  json old_value;
  json new_value;
};

struct CorrectionRecord {
  std::string job_id;
  std::string section_id;
  std::string reviewer;
  Role role = Role::Reviewer;
  std::string timestamp;
  std::vector<CorrectionChange> changes;
};

json to_json(const CorrectionRecord& record);

struct ReviewOutcome {
  ExtractionResult result;
  CorrectionRecord record;
};

// Applies the actions addressed to result.section_id. Overrides take confidence 1.0 and
// provenance "human"; accepts keep the value and are marked reviewed at confidence 1.0.
ReviewOutcome apply_review(const ExtractionResult& result, const ClassSchema& schema, const ReviewDecision& decision,
                           double threshold = kDefaultConfidenceThreshold);

// Append-only, one JSON record per line.
void append_correction(const std::filesystem::path& log, const CorrectionRecord& record);

std::string utc_timestamp();

}  // namespace docpipe
