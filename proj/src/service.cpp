#include "docpipe/service.hpp"

#include <algorithm>
#include <fstream>

#include <httplib.h>

#include "docpipe/batch.hpp"

namespace docpipe {

namespace fs = std::filesystem;

std::map<std::string, Role> load_tokens(const fs::path& path) {
  const json doc = read_document(path);
  if (!doc.is_object() || !doc.contains("tokens") || !doc["tokens"].is_object())
    throw ValidationError("tokens: expected {\"tokens\": {token: role}}");
  std::map<std::string, Role> out;
  for (const auto& [token, role] : doc["tokens"].items()) {
    if (token.empty()) throw ValidationError("tokens: empty token");
    if (!role.is_string()) throw ValidationError("tokens." + token + ": expected a role name");
    out[token] = parse_role(role.get<std::string>());
  }
  return out;
}

namespace {

HttpResponse error(int status, const std::string& message) { return {status, json{{"error", message}}}; }

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path.substr(0, path.find('?'))) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

json job_json(const JobRecord& r) {
  json doc = to_json(r);
  doc["terminal"] = is_terminal(r.stage);
  return doc;
}

}  // namespace

Service::Service(Engine& engine, WorkerPool& pool, std::map<std::string, Role> tokens, std::string backend_name)
    : engine_(engine), pool_(pool), tokens_(std::move(tokens)), backend_name_(std::move(backend_name)) {}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& authorization,
                             const std::string& body) {
  static const std::string kBearer = "Bearer ";
  if (authorization.compare(0, kBearer.size(), kBearer) != 0) return error(401, "missing bearer token");
  auto it = tokens_.find(authorization.substr(kBearer.size()));
  if (it == tokens_.end()) return error(401, "unknown token");
  try {
    return route(method, path, it->second, body);
  } catch (const JobNotFound& e) {
    return error(404, e.what());
  } catch (const ReviewConflict& e) {
    return error(409, e.what());
  } catch (const Unauthorized& e) {
    return error(403, e.what());
  } catch (const Error& e) {
    return error(400, e.what());
  } catch (const json::exception& e) {
    return error(400, e.what());
  }
}

HttpResponse Service::route(const std::string& method, const std::string& path, Role role, const std::string& body) {
  const auto parts = split_path(path);
  auto job_exists = [&](const std::string& id) {
    if (!engine_.store().exists(id)) throw JobNotFound("job " + id + " not found");
  };

  if (method == "POST" && parts.size() == 1 && parts[0] == "jobs") {
    if (role != Role::Admin) return error(403, "registering packets requires the admin role");
    const json req = parse_document(body, "request body");
    fs::path packet_path;
    if (req.contains("packet_path")) {
      packet_path = req.at("packet_path").get<std::string>();
    } else if (req.contains("packet")) {
      const DocumentPacket packet = packet_from_json(req.at("packet"));
      packet_path = engine_.store().root() / "uploads" / (packet.packet_id + ".json");
      fs::create_directories(packet_path.parent_path());
      std::ofstream(packet_path, std::ios::binary | std::ios::trunc) << packet_to_json(packet).dump(2);
    } else {
      return error(400, "body needs packet_path or packet");
    }
    const std::string id = engine_.submit(packet_path);
    const JobRecord record = engine_.status(id);
    if (record.stage == Stage::Queued) pool_.submit(id);
    return {201, json{{"job_id", id}, {"stage", to_string(record.stage)}}};
  }

  if (method == "GET" && parts.size() >= 2 && parts[0] == "jobs") {
    const std::string& id = parts[1];
    job_exists(id);
    if (parts.size() == 2) return {200, job_json(engine_.status(id))};
    if (parts.size() == 3) {
      if (parts[2] == "sections") return {200, engine_.sections_view(id)};
      if (parts[2] == "extraction") return {200, engine_.extraction_view(id)};
      if (parts[2] == "intermediates") return {200, engine_.intermediates_view(id)};
      if (parts[2] == "determinations") return {200, engine_.determinations_view(id)};
    }
    return error(404, "no such resource");
  }

  if (method == "GET" && parts.size() == 2 && parts[0] == "review" && parts[1] == "queue") {
    std::vector<JobRecord> waiting;
    for (auto& r : engine_.jobs())
      if (r.stage == Stage::AwaitingReview) waiting.push_back(std::move(r));
    std::sort(waiting.begin(), waiting.end(), [](const JobRecord& a, const JobRecord& b) {
      if (a.updated_at != b.updated_at) return a.updated_at > b.updated_at;
      return a.sequence > b.sequence;
    });
    json items = json::array();
    for (const auto& r : waiting) {
      json item = engine_.review_item(r.job_id);
      if (!item.is_null()) items.push_back(std::move(item));
    }
    return {200, json{{"items", items}}};
  }

  if (method == "POST" && parts.size() == 2 && parts[0] == "review") {
    const std::string& id = parts[1];
    job_exists(id);
    ReviewDecision decision = review_decision_from_json(parse_document(body, "request body"));
    decision.role = role;  // the token decides the role, not the body
    if (decision.reviewer.empty()) decision.reviewer = std::string(to_string(role));
    const JobRecord record = engine_.submit_review(id, decision);
    pool_.submit(id);
    return {200, json{{"job_id", id}, {"stage", to_string(record.stage)}}};
  }

  if (method == "GET" && parts.size() == 2 && parts[0] == "reports" && parts[1] == "latest") {
    std::vector<json> docs;
    for (const auto& r : engine_.jobs()) docs.push_back(engine_.result_document(r.job_id));
    RunReport report;
    report.rows.push_back(summarize_results(docs, backend_name_, engine_.config().modality));
    return {200, to_json(report)};
  }

  return error(404, "no route for " + method + " " + path);
}

void Service::listen(const std::string& host, int port) {
  auto server = std::make_shared<httplib::Server>();
  server_ = server;
  auto bridge = [this](const httplib::Request& req, httplib::Response& res) {
    const HttpResponse r = handle(req.method, req.path, req.get_header_value("Authorization"), req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server->Get(".*", bridge);
  server->Post(".*", bridge);
  if (!server->listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
  if (auto server = std::static_pointer_cast<httplib::Server>(server_)) server->stop();
}

}  // namespace docpipe
