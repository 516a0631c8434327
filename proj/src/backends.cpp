#include "docpipe/backends.hpp"

#include <cstdlib>

namespace docpipe {

namespace {

long estimate_tokens(std::size_t chars) { return static_cast<long>((chars + 3) / 4); }

}  // namespace

BackendResponse MockExtractor::extract(const ModelRequest& request) {
  const ClassSchema* schema = find_class(classes_, request.class_name);
  if (!schema) throw BackendError("mock: unknown class '" + request.class_name + "'");
  BackendResponse response;
  response.raw = mock_extract(request, *schema);
  response.input_tokens = estimate_tokens(request.prompt.size());
  response.output_tokens = estimate_tokens(response.raw.size());
  return response;
}

BackendResponse ProseExtractor::extract(const ModelRequest& request) {
  BackendResponse response;
  response.raw = "Sure! I looked at the " + request.class_name + " and the total is probably listed near the bottom.";
  response.input_tokens = estimate_tokens(request.prompt.size());
  response.output_tokens = estimate_tokens(response.raw.size());
  return response;
}

BackendResponse FailingExtractor::extract(const ModelRequest&) {
  throw BackendError("always_fail: backend unavailable");
}

HttpBackendSettings HttpBackendSettings::from_env() {
  HttpBackendSettings s;
  if (const char* v = std::getenv("DOCPIPE_MODEL_ENDPOINT")) s.endpoint = v;
  if (const char* v = std::getenv("DOCPIPE_MODEL_API_KEY")) s.api_key = v;
  if (const char* v = std::getenv("DOCPIPE_MODEL_TIMEOUT_S")) {
    if (auto n = parse_number(v); n && *n > 0) s.timeout = std::chrono::seconds(static_cast<long>(*n));
  }
  return s;
}

std::unique_ptr<ExtractorBackend> make_extractor(const std::string& name, const ClassConfig& classes) {
  if (name == "mock") return std::make_unique<MockExtractor>(classes);
  if (name == "always_prose") return std::make_unique<ProseExtractor>();
  if (name == "always_fail") return std::make_unique<FailingExtractor>();
  if (name == "http") {
    auto settings = HttpBackendSettings::from_env();
    if (settings.endpoint.empty()) throw ValidationError("backend http: DOCPIPE_MODEL_ENDPOINT is not set");
    return std::make_unique<HttpExtractor>(std::move(settings));
  }
  throw ValidationError("backend: unknown extractor '" + name + "'");
}

std::unique_ptr<ClassifierBackend> make_classifier(const std::string& name) {
  if (name == "http") {
    auto settings = HttpBackendSettings::from_env();
    if (settings.endpoint.empty()) throw ValidationError("backend http: DOCPIPE_MODEL_ENDPOINT is not set");
    return std::make_unique<HttpClassifier>(std::move(settings));
  }
  return std::make_unique<MockClassifier>();
}

}  // namespace docpipe
