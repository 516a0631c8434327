#include <httplib.h>

#include "docpipe/backends.hpp"

namespace docpipe {

namespace {

json post_json(const HttpBackendSettings& settings, const std::string& path, const json& body) {
  httplib::Client client(settings.endpoint);
  client.set_connection_timeout(settings.timeout);
  client.set_read_timeout(settings.timeout);
  client.set_write_timeout(settings.timeout);
  httplib::Headers headers;
  if (!settings.api_key.empty()) headers.emplace("Authorization", "Bearer " + settings.api_key);
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw BackendError("http " + path + ": " + httplib::to_string(res.error()));
  if (res->status != 200) throw BackendError("http " + path + ": status " + std::to_string(res->status));
  try {
    return json::parse(res->body);
  } catch (const json::parse_error& e) {
    throw BackendError("http " + path + ": malformed envelope: " + e.what());
  }
}

}  // namespace

BackendResponse HttpExtractor::extract(const ModelRequest& request) {
  json attributes = json::array();
  for (const auto* a : request.attributes)
    attributes.push_back({{"name", a->name}, {"value_kind", to_string(a->kind)}, {"description", a->description}});
  json body{{"prompt", request.prompt},
            {"class_name", request.class_name},
            {"modality", to_string(request.modality)},
            {"image_refs", request.image_refs},
            {"attributes", std::move(attributes)}};
  json reply = post_json(settings_, "/extract", body);
  if (!reply.is_object() || !reply.contains("output") || !reply["output"].is_string())
    throw BackendError("http /extract: reply lacks 'output'");
  BackendResponse response;
  response.raw = reply["output"].get<std::string>();
  if (auto usage = reply.find("usage"); usage != reply.end() && usage->is_object()) {
    response.input_tokens = usage->value("input_tokens", 0L);
    response.output_tokens = usage->value("output_tokens", 0L);
  }
  return response;
}

BioLabel HttpClassifier::classify(const ClassifyRequest& request) {
  json classes = json::array();
  for (const auto& c : request.classes) classes.push_back({{"class_name", c.class_name}, {"description", c.description}});
  json body{{"page_text", request.page_text}, {"classes", std::move(classes)}};
  if (request.image_ref) body["image_ref"] = *request.image_ref;
  if (request.previous_page_text) body["previous_page_text"] = *request.previous_page_text;
  json reply = post_json(settings_, "/classify", body);
  if (!reply.is_object() || !reply.contains("label") || !reply["label"].is_string())
    throw BackendError("http /classify: reply lacks 'label'");
  try {
    return BioLabel::parse(reply["label"].get<std::string>());
  } catch (const Error& e) {
    throw BackendError(std::string("http /classify: ") + e.what());
  }
}

}  // namespace docpipe
