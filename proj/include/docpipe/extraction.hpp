#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "docpipe/core.hpp"
#include "docpipe/retry.hpp"
#include "docpipe/segmentation.hpp"

namespace docpipe {

enum class Modality { Ocr, Image, OcrImage };

std::string_view to_string(Modality modality);
Modality parse_modality(std::string_view text);
inline bool uses_text(Modality m) { return m != Modality::Image; }
inline bool uses_images(Modality m) { return m != Modality::Ocr; }

// Position of one OCR line inside ModelRequest::section_text.
struct LineRef {
  std::size_t offset = 0;
  std::size_t length = 0;
  int page = 0;
  BoundingBox bbox;
};

struct FewShotPair {
  std::string attribute;
  std::string input;
  json expected;
};

struct ModelRequest {
  std::string section_id;
  std::string class_name;
  std::string class_description;
  std::vector<const AttributeSchema*> attributes;
  std::vector<FewShotPair> few_shot;
  Modality modality = Modality::Ocr;
  std::string section_text;  // empty for image-only requests
  std::vector<LineRef> lines;
  std::vector<std::string> image_refs;
  // Full prompt: class description, attribute list, few-shot block, section text.
  std::string prompt;
};

struct AttributeValue {
  std::string name;
  json value;
  double confidence = 1.0;
  std::optional<BoundingBox> bbox;
  std::optional<std::string> justification;
  std::string provenance = "model";  // "model" | "human"
  bool reviewed = false;

  bool operator==(const AttributeValue&) const = default;
};

enum class ExtractionStatus { Ok, Failed };
enum class FailureKind { None, Structure, Backend, Input };

struct ExtractionResult {
  std::string section_id;
  std::string class_name;
  std::vector<AttributeValue> attributes;
  ExtractionStatus status = ExtractionStatus::Ok;
  FailureKind failure_kind = FailureKind::None;
  std::string failure_reason;
  double latency_ms = 0.0;
  double cost = 0.0;
  int attempts = 0;
  long input_tokens = 0;
  long output_tokens = 0;
  std::vector<std::string> raw_outputs;
  std::vector<std::string> warnings;

  bool ok() const { return status == ExtractionStatus::Ok; }
  const AttributeValue* find(std::string_view name) const;
};

json to_json(const AttributeValue& value);
AttributeValue attribute_value_from_json(const json& doc);
json to_json(const ExtractionResult& result);
ExtractionResult extraction_result_from_json(const json& doc);

struct BackendResponse {
  std::string raw;
  long input_tokens = 0;
  long output_tokens = 0;
};

class ExtractorBackend {
 public:
  virtual ~ExtractorBackend() = default;
  virtual std::string name() const = 0;
  // Must be safe to call concurrently. Throws BackendError when unavailable.
  virtual BackendResponse extract(const ModelRequest& request) = 0;
};

// Prices per 1K tokens.
struct Price {
  double price_in = 0.0;
  double price_out = 0.0;
};

class PriceTable {
 public:
  PriceTable() = default;
  explicit PriceTable(std::map<std::string, Price> prices) : prices_(std::move(prices)) {}

  static PriceTable from_json(const json& doc);
  static PriceTable load(const std::filesystem::path& path);

  double cost(const std::string& backend, long input_tokens, long output_tokens) const;
  const std::map<std::string, Price>& prices() const { return prices_; }

 private:
  std::map<std::string, Price> prices_;
};

ModelRequest build_request(const Section& section, const DocumentPacket& packet, const ClassSchema& schema,
                           Modality modality, bool few_shot);

struct ValidatedOutput {
  std::vector<AttributeValue> attributes;
  std::vector<std::string> warnings;
};

// Throws StructureError for unparseable text, a non-map top level, or a kind mismatch.
ValidatedOutput validate_output(std::string_view raw, const ClassSchema& schema);

// Coerces a raw value to the attribute kind; nullopt when it does not fit.
std::optional<json> coerce_value(const json& raw, const AttributeSchema& attr);

inline constexpr double kMockConfidence = 0.95;
inline constexpr double kMockLowConfidence = 0.5;

// Deterministic pattern-capture extractor output; always structurally valid.
std::string mock_extract(const ModelRequest& request, const ClassSchema& schema);

struct ExtractOptions {
  bool few_shot = false;
  RetryPolicy retry;
  Backoff* backoff = nullptr;  // jitter source; a default one is used when null
  Sleeper sleeper;             // defaults to real sleeping
  const PriceTable* prices = nullptr;
};

// Never throws for backend or structure failures: they end up in the result status.
ExtractionResult extract_section(const Section& section, const DocumentPacket& packet, const ClassSchema& schema,
                                 ExtractorBackend& backend, Modality modality, const ExtractOptions& options);

}  // namespace docpipe
