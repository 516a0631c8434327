#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docpipe/core.hpp"

namespace docpipe {

enum class BioTag { B, I, O };

class BioLabel {
 public:
  BioLabel() = default;  // O
  BioLabel(BioTag tag, std::string class_name);

  static BioLabel begin(std::string class_name) { return {BioTag::B, std::move(class_name)}; }
  static BioLabel inside(std::string class_name) { return {BioTag::I, std::move(class_name)}; }
  static BioLabel outside() { return {}; }

  BioTag tag() const { return tag_; }
  const std::string& class_name() const { return class_name_; }

  // "B-invoice", "I-w2", "O"
  std::string str() const;
  static BioLabel parse(std::string_view text);

  bool operator==(const BioLabel&) const = default;

 private:
  BioTag tag_ = BioTag::O;
  std::string class_name_;
};

// A contiguous run of pages with one class.
struct Section {
  std::string section_id;
  std::string class_name;
  std::vector<int> page_indices;

  bool operator==(const Section&) const = default;
};

json sections_to_json(const std::vector<Section>& sections);
std::vector<Section> sections_from_json(const json& doc);

struct ClassifyRequest {
  std::string page_text;
  std::optional<std::string> image_ref;
  // Text of the preceding page, so page-local backends can decide B versus I.
  std::optional<std::string> previous_page_text;
  std::span<const ClassSchema> classes;
};

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;
  virtual std::string name() const = 0;
  // Must be safe to call concurrently.
  virtual BioLabel classify(const ClassifyRequest& request) = 0;
};

// Keyword-count classifier: argmax over configured keyword hits, ties to config order.
class MockClassifier : public ClassifierBackend {
 public:
  std::string name() const override { return "mock"; }
  BioLabel classify(const ClassifyRequest& request) override;

  // Predicted class for one page text, or empty when no keyword hits.
  static std::string predict(std::string_view text, std::span<const ClassSchema> classes);
};

struct PageClassification {
  std::vector<BioLabel> labels;
  std::vector<std::string> warnings;
};

std::string page_text(const Page& page);

// One label per page in page order. Backend calls fan out over at most `max_concurrency` threads.
PageClassification classify_pages(const DocumentPacket& packet, const ClassConfig& classes,
                                  ClassifierBackend& backend, int max_concurrency = 1);

std::vector<Section> decode_bio(std::span<const BioLabel> labels);

// Inverse of decode_bio for well-formed sections: B on each first page, I after, O for "other".
std::vector<BioLabel> encode_bio(std::span<const Section> sections);

std::vector<Section> sectionize(const DocumentPacket& packet, const ClassConfig& classes,
                                ClassifierBackend& backend, int max_concurrency = 1);

}  // namespace docpipe
