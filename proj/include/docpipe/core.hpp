#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "docpipe/errors.hpp"

namespace docpipe {

using json = nlohmann::json;

// Normalized page-fraction coordinates, origin top-left.
struct BoundingBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool operator==(const BoundingBox&) const = default;
};

struct TextLine {
  std::string text;
  double confidence = 100.0;  // OCR confidence, percent
  BoundingBox bbox;

  bool operator==(const TextLine&) const = default;
};

struct Page {
  int index = 0;
  std::vector<TextLine> lines;
  std::optional<std::string> image_ref;

  bool operator==(const Page&) const = default;
};

struct DocumentPacket {
  std::string packet_id;
  std::vector<Page> pages;
  std::string source_path;

  bool operator==(const DocumentPacket&) const = default;
};

enum class ValueKind { String, Number, Date, RecordList };
enum class ComparatorKind { Exact, Fuzzy, Numeric, BboxIou };

inline constexpr double kDefaultFuzzyThreshold = 0.8;
inline constexpr double kDefaultIouThreshold = 0.5;
inline constexpr double kDefaultConfidenceThreshold = 0.8;
inline constexpr std::string_view kOtherClass = "other";

struct ComparatorSpec {
  ComparatorKind kind = ComparatorKind::Exact;
  double threshold = kDefaultFuzzyThreshold;
  double tolerance = 0.0;
  bool normalize_case = true;
  bool trim_whitespace = true;

  bool operator==(const ComparatorSpec&) const = default;
};

struct FewShotExample {
  std::string input;
  json expected;

  bool operator==(const FewShotExample&) const = default;
};

// A mock pattern tagged with the "@low" suffix yields low-confidence values.
struct MockPattern {
  std::string regex;
  bool low_confidence = false;

  bool operator==(const MockPattern&) const = default;
};

struct AttributeSchema {
  std::string name;
  ValueKind kind = ValueKind::String;
  std::string description;
  ComparatorSpec comparator;
  double weight = 1.0;
  std::vector<MockPattern> mock_patterns;
  // Line (or row) templates for the corpus generator, "{value}" or "{field}" placeholders.
  // Entry i renders text that mock_patterns[i] recovers.
  std::vector<std::string> mock_templates;
  std::vector<FewShotExample> few_shot_examples;
  std::vector<AttributeSchema> fields;  // RecordList only

  bool operator==(const AttributeSchema&) const = default;
};

struct ClassSchema {
  std::string class_name;
  std::string description;
  std::vector<std::string> keywords;
  std::vector<AttributeSchema> attributes;

  const AttributeSchema* find_attribute(std::string_view name) const;
  bool operator==(const ClassSchema&) const = default;
};

using ClassConfig = std::vector<ClassSchema>;

const ClassSchema* find_class(const ClassConfig& classes, std::string_view name);

// Ground truth for one packet.
struct LabeledSection {
  std::string class_name;
  std::vector<int> pages;
  json attributes = json::object();
};

struct GroundTruth {
  std::string packet_id;
  std::vector<LabeledSection> sections;
};

std::string_view to_string(ValueKind kind);
std::string_view to_string(ComparatorKind kind);
ValueKind parse_value_kind(std::string_view text);
ComparatorKind parse_comparator_kind(std::string_view text);

// Conversions from already-decoded documents; invariants are checked.
DocumentPacket packet_from_json(const json& doc, const std::string& source_path = {});
json packet_to_json(const DocumentPacket& packet);
ClassConfig class_config_from_json(const json& doc);
json class_config_to_json(const ClassConfig& classes);
GroundTruth ground_truth_from_json(const json& doc, const ClassConfig* classes = nullptr);
json ground_truth_to_json(const GroundTruth& truth);

json bbox_to_json(const BoundingBox& box);
BoundingBox bbox_from_json(const json& value, const std::string& path);
void validate_bbox(const BoundingBox& box, const std::string& path);

// Decodes structured text; throws ParseError on anything malformed.
json parse_document(std::string_view text, const std::string& origin);
json read_document(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

DocumentPacket load_packet(const std::filesystem::path& path);
ClassConfig load_class_config(const std::filesystem::path& path);
GroundTruth load_ground_truth(const std::filesystem::path& path, const ClassConfig* classes = nullptr);

// Accepts currency symbols and thousands separators ("$1,234.50"); nullopt when not numeric.
std::optional<double> parse_number(std::string_view text);

// Stable 64-bit FNV-1a; used for job ids and config fingerprints.
std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);

}  // namespace docpipe
