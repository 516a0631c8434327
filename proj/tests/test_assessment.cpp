#include <doctest.h>

#include <algorithm>

#include "docpipe/assessment.hpp"
#include "support.hpp"

using namespace docpipe;

namespace {

ExtractionResult result_with(std::vector<std::pair<std::string, double>> attrs) {
  ExtractionResult r;
  r.section_id = "s0";
  r.class_name = "invoice";
  for (const auto& [name, conf] : attrs) {
    AttributeValue v;
    v.name = name;
    v.value = name == "total_amount" ? json(100.0) : json("X-1");
    v.confidence = conf;
    r.attributes.push_back(v);
  }
  return r;
}

const ClassSchema& invoice_schema() {
  static const ClassConfig classes = support::sample_classes();
  return *find_class(classes, "invoice");
}

ReviewDecision decision(Role role, std::vector<ReviewAction> actions) {
  ReviewDecision d;
  d.reviewer = "pat";
  d.role = role;
  d.actions = std::move(actions);
  d.timestamp = "2026-01-01T00:00:00Z";
  return d;
}

ReviewAction accept(std::string attr) { return {"s0", std::move(attr), ReviewActionKind::Accept, {}}; }
ReviewAction override_with(std::string attr, json v) { return {"s0", std::move(attr), ReviewActionKind::Override, std::move(v)}; }

}  // namespace

TEST_CASE("assess flags strictly below the threshold") {
  const auto r = result_with({{"invoice_number", 0.8}, {"total_amount", 0.79}});
  const std::vector<TextLine> lines = {{"a", 90.0, {}}, {"b", 70.0, {}}};
  const ConfidenceReport rep = assess(r, lines, 0.8);
  CHECK_FALSE(rep.entries[0].flagged);
  CHECK(rep.entries[1].flagged);
  CHECK(rep.min_attribute_confidence == 0.79);
  REQUIRE(rep.ocr);
  CHECK(rep.ocr->min == doctest::Approx(0.7));
  CHECK(rep.ocr->mean == doctest::Approx(0.8));
  CHECK(confidence_report_from_json(to_json(rep)).entries.size() == 2);
}

TEST_CASE("assess refuses failed extractions") {
  ExtractionResult r;
  r.status = ExtractionStatus::Failed;
  CHECK_THROWS_AS(assess(r, {}, 0.8), AssessOnFailed);
}

TEST_CASE("routing") {
  const auto low = assess(result_with({{"invoice_number", 0.5}, {"total_amount", 0.95}}), {}, 0.8);
  const auto high = assess(result_with({{"invoice_number", 0.95}}), {}, 0.8);
  CHECK(route(low, true, 0.8).outcome == RoutingOutcome::Review);
  CHECK(route(low, true, 0.8).trigger_attributes == std::vector<FlaggedAttribute>{{"s0", "invoice_number"}});
  CHECK(route(low, false, 0.8).outcome == RoutingOutcome::AutoApprove);
  CHECK(route(high, true, 0.8).outcome == RoutingOutcome::AutoApprove);
  CHECK(route(low, true, 0.0).outcome == RoutingOutcome::AutoApprove);
  CHECK(route(high, true, 1.0).outcome == RoutingOutcome::Review);
  CHECK_THROWS_AS(route(low, true, 1.5), ValidationError);
  const RoutingDecision d = route(low, true, 0.8);
  CHECK(routing_decision_from_json(to_json(d)).trigger_attributes == d.trigger_attributes);
}

TEST_CASE("review override and accept") {
  const auto r = result_with({{"invoice_number", 0.5}, {"total_amount", 0.6}});
  const auto out = apply_review(r, invoice_schema(),
                                decision(Role::Reviewer, {override_with("total_amount", "$120.00"), accept("invoice_number")}));
  const AttributeValue* total = out.result.find("total_amount");
  CHECK(total->value == 120.0);
  CHECK(total->confidence == 1.0);
  CHECK(total->provenance == "human");
  CHECK(total->reviewed);
  const AttributeValue* num = out.result.find("invoice_number");
  CHECK(num->value == "X-1");
  CHECK(num->confidence == 1.0);
  CHECK(num->provenance == "model");
  CHECK(out.record.changes.size() == 2);
  CHECK(out.record.reviewer == "pat");
  const json changes = to_json(out.record)["changes"];
  const auto it = std::find_if(changes.begin(), changes.end(), [](const json& c) { return c["attribute"] == "total_amount"; });
  REQUIRE(it != changes.end());
  CHECK((*it)["old"] == 100.0);
}

TEST_CASE("review must cover every flagged attribute") {
  const auto r = result_with({{"invoice_number", 0.5}, {"total_amount", 0.6}});
  CHECK_THROWS_AS(apply_review(r, invoice_schema(), decision(Role::Reviewer, {accept("invoice_number")})),
                  IncompleteDecision);
  CHECK_THROWS_AS(apply_review(r, invoice_schema(),
                               decision(Role::Reviewer, {accept("invoice_number"), accept("invoice_number"),
                                                         accept("total_amount")})),
                  IncompleteDecision);
}

TEST_CASE("reviewers cannot override unflagged attributes; admins can") {
  const auto r = result_with({{"invoice_number", 0.95}});
  CHECK_THROWS_AS(apply_review(r, invoice_schema(), decision(Role::Reviewer, {override_with("invoice_number", "Z-9")})),
                  Unauthorized);
  const auto out = apply_review(r, invoice_schema(), decision(Role::Admin, {override_with("invoice_number", "Z-9")}));
  CHECK(out.result.find("invoice_number")->value == "Z-9");
  CHECK(out.result.find("invoice_number")->provenance == "human");
}

TEST_CASE("accepting an unflagged attribute changes nothing") {
  const auto r = result_with({{"invoice_number", 0.95}});
  const auto out = apply_review(r, invoice_schema(), decision(Role::Reviewer, {accept("invoice_number")}));
  CHECK(out.result.attributes == r.attributes);
}

TEST_CASE("override value must fit the attribute kind") {
  const auto r = result_with({{"total_amount", 0.5}});
  CHECK_THROWS_AS(apply_review(r, invoice_schema(), decision(Role::Reviewer, {override_with("total_amount", "many")})),
                  KindMismatch);
  CHECK_THROWS_AS(apply_review(r, invoice_schema(),
                               decision(Role::Reviewer, {accept("total_amount"), override_with("nonexistent", 1)})),
                  ValidationError);
}

TEST_CASE("decision parsing") {
  const ReviewDecision d = review_decision_from_json(json::parse(
      R"({"reviewer":"kim","role":"admin","actions":[{"section_id":"s0","attribute":"a"},
          {"section_id":"s1","attribute":"b","action":"override","value":3}]})"));
  CHECK(d.role == Role::Admin);
  REQUIRE(d.actions.size() == 2);
  CHECK(d.actions[0].kind == ReviewActionKind::Accept);
  CHECK(d.actions[1].value == 3);
  CHECK_THROWS_AS(review_decision_from_json(json::parse(R"({"actions":[{"attribute":"a","action":"override"}]})")),
                  ValidationError);
  CHECK_THROWS_AS(review_decision_from_json(json::parse(R"({"role":"boss","actions":[]})")), ValidationError);
  CHECK_THROWS_AS(review_decision_from_json(json::parse(R"({"actions":{}})")), ValidationError);
}

TEST_CASE("correction log appends one line per record") {
  support::TempDir dir;
  CorrectionRecord rec;
  rec.job_id = "j";
  rec.section_id = "s0";
  append_correction(dir / "c.log", rec);
  append_correction(dir / "c.log", rec);
  const std::string text = support::slurp(dir / "c.log");
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}
