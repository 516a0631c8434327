#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <string>

#include "docpipe/extraction.hpp"
#include "docpipe/segmentation.hpp"

namespace docpipe {

// Pattern-capture extractor driven by each attribute's mock_pattern.
class MockExtractor : public ExtractorBackend {
 public:
  explicit MockExtractor(ClassConfig classes) : classes_(std::move(classes)) {}

  std::string name() const override { return "mock"; }
  BackendResponse extract(const ModelRequest& request) override;

 private:
  ClassConfig classes_;
};

// Answers in prose, never in the required structure.
class ProseExtractor : public ExtractorBackend {
 public:
  std::string name() const override { return "always_prose"; }
  BackendResponse extract(const ModelRequest& request) override;
};

// Always unavailable.
class FailingExtractor : public ExtractorBackend {
 public:
  std::string name() const override { return "always_fail"; }
  BackendResponse extract(const ModelRequest& request) override;
};

// Settings for the optional external model adapter, read from the environment:
//   DOCPIPE_MODEL_ENDPOINT   base URL, e.g. http://127.0.0.1:8900
//   DOCPIPE_MODEL_API_KEY    bearer token (optional)
//   DOCPIPE_MODEL_TIMEOUT_S  per-request timeout, default 120
struct HttpBackendSettings {
  std::string endpoint;
  std::string api_key;
  std::chrono::seconds timeout{120};

  static HttpBackendSettings from_env();
};

// POST <endpoint>/extract {prompt, class_name, modality, image_refs, attributes}
//   -> {"output": "<raw text>", "usage": {"input_tokens": n, "output_tokens": n}}
class HttpExtractor : public ExtractorBackend {
 public:
  explicit HttpExtractor(HttpBackendSettings settings) : settings_(std::move(settings)) {}

  std::string name() const override { return "http"; }
  BackendResponse extract(const ModelRequest& request) override;

 private:
  HttpBackendSettings settings_;
};

// POST <endpoint>/classify {page_text, image_ref, previous_page_text, classes} -> {"label": "B-invoice"}
class HttpClassifier : public ClassifierBackend {
 public:
  explicit HttpClassifier(HttpBackendSettings settings) : settings_(std::move(settings)) {}

  std::string name() const override { return "http"; }
  BioLabel classify(const ClassifyRequest& request) override;

 private:
  HttpBackendSettings settings_;
};

// Names: "mock", "always_prose", "always_fail", "http".
std::unique_ptr<ExtractorBackend> make_extractor(const std::string& name, const ClassConfig& classes);
// Names: "mock", "http". Other extractor names fall back to the mock classifier.
std::unique_ptr<ClassifierBackend> make_classifier(const std::string& name);

}  // namespace docpipe
