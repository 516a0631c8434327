#include <doctest.h>

#include "docpipe/core.hpp"
#include "support.hpp"

using namespace docpipe;

namespace {

json page(int index, std::vector<std::string> lines) {
  json out = json::array();
  for (const auto& l : lines) out.push_back({{"text", l}, {"confidence", 97.5}, {"bbox", {0.1, 0.1, 0.5, 0.15}}});
  return {{"index", index}, {"lines", out}};
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("packet round trip keeps every field") {
  json doc{{"packet_id", "p1"}, {"pages", {page(0, {"INVOICE", "Total Due: $10.00"}), page(1, {"more"})}}};
  doc["pages"][1]["image_ref"] = "img/p1-1.png";
  const DocumentPacket p = packet_from_json(doc, "in.json");
  CHECK(p.packet_id == "p1");
  REQUIRE(p.pages.size() == 2);
  CHECK(p.pages[0].lines[1].text == "Total Due: $10.00");
  CHECK(p.pages[0].lines[0].confidence == 97.5);
  CHECK(p.pages[1].image_ref == "img/p1-1.png");
  CHECK(packet_from_json(packet_to_json(p), "in.json") == p);
}

TEST_CASE("packet pages may arrive out of order") {
  json doc{{"packet_id", "p"}, {"pages", {page(1, {"b"}), page(0, {"a"})}}};
  const DocumentPacket p = packet_from_json(doc);
  CHECK(p.pages[0].lines[0].text == "a");
  CHECK(p.pages[1].index == 1);
}

TEST_CASE("packet validation names the offending field") {
  CHECK(message_of([] { packet_from_json(json{{"packet_id", "p"}, {"pages", json::array()}}); })
            .find("packet.pages") == 0);
  CHECK(message_of([] { packet_from_json(json{{"packet_id", "p"}, {"pages", {page(0, {}), page(2, {})}}}); })
            .find("page index gap") != std::string::npos);
  CHECK(message_of([] { packet_from_json(json{{"packet_id", "p"}, {"pages", {page(0, {}), page(0, {})}}}); })
            .find("duplicate page index") != std::string::npos);
  json bad_conf{{"packet_id", "p"}, {"pages", {page(0, {"x"})}}};
  bad_conf["pages"][0]["lines"][0]["confidence"] = 140;
  CHECK_THROWS_AS(packet_from_json(bad_conf), ValidationError);
  json bad_box{{"packet_id", "p"}, {"pages", {page(0, {"x"})}}};
  bad_box["pages"][0]["lines"][0]["bbox"] = {0.5, 0.1, 0.2, 0.3};
  CHECK_THROWS_AS(packet_from_json(bad_box), ValidationError);
  CHECK_THROWS_AS(packet_from_json(json{{"pages", {page(0, {})}}}), ValidationError);
}

TEST_CASE("structured text parsing reports malformed input") {
  CHECK(parse_document("{\"a\": 1}", "x")["a"] == 1);
  CHECK_THROWS_AS(parse_document("{\"a\": ", "x"), ParseError);
  CHECK_THROWS_AS(read_document("/nonexistent/file.json"), Error);
}

TEST_CASE("class config parsing") {
  const ClassConfig classes = support::sample_classes();
  REQUIRE(classes.size() == 3);
  const ClassSchema* inv = find_class(classes, "invoice");
  REQUIRE(inv);
  const AttributeSchema* total = inv->find_attribute("total_amount");
  REQUIRE(total);
  CHECK(total->kind == ValueKind::Number);
  CHECK(total->comparator.kind == ComparatorKind::Numeric);
  CHECK(total->weight == 2.0);
  REQUIRE(total->mock_patterns.size() == 2);
  CHECK_FALSE(total->mock_patterns[0].low_confidence);
  CHECK(total->mock_patterns[1].low_confidence);
  CHECK(total->mock_templates.size() == 2);
  CHECK(inv->find_attribute("line_items")->fields.size() == 3);
  CHECK(class_config_from_json(class_config_to_json(classes)) == classes);
}

TEST_CASE("comparator defaults follow the value kind") {
  json doc{{"classes",
            {{{"class_name", "c"},
              {"attributes",
               {{{"name", "n"}, {"value_kind", "number"}}, {{"name", "s"}, {"value_kind", "string"}}}}}}}};
  const ClassConfig c = class_config_from_json(doc);
  CHECK(c[0].attributes[0].comparator.kind == ComparatorKind::Numeric);
  CHECK(c[0].attributes[1].comparator.kind == ComparatorKind::Exact);
}

TEST_CASE("class config rejects duplicates and bad patterns") {
  auto with_attrs = [](json attrs) { return json{{"classes", {{{"class_name", "c"}, {"attributes", attrs}}}}}; };
  CHECK_THROWS_AS(class_config_from_json(with_attrs({{{"name", "a"}}, {{"name", "a"}}})), ValidationError);
  CHECK_THROWS_AS(class_config_from_json(with_attrs({{{"name", "a"}, {"mock_pattern", "no group"}}})), ValidationError);
  CHECK_THROWS_AS(class_config_from_json(with_attrs({{{"name", "a"}, {"mock_pattern", "(["}}})), ValidationError);
  CHECK_THROWS_AS(class_config_from_json(with_attrs({{{"name", "a"}, {"value_kind", "blob"}}})), ValidationError);
  CHECK_THROWS_AS(
      class_config_from_json(with_attrs({{{"name", "a"}, {"mock_pattern", "(x)"}, {"mock_template", {"1", "2"}}}})),
      ValidationError);
  CHECK_THROWS_AS(class_config_from_json(with_attrs({{{"name", "l"}, {"value_kind", "list-of-records"}}})),
                  ValidationError);
  CHECK_THROWS_AS(class_config_from_json(json{{"classes", {{{"class_name", "other"}, {"attributes", {{{"name", "a"}}}}}}}}),
                  ValidationError);
  CHECK_THROWS_AS(class_config_from_json(json{{"classes", json::array()}}), ValidationError);
}

TEST_CASE("ground truth must label every page once") {
  const ClassConfig classes = support::sample_classes();
  json ok{{"packet_id", "p"},
          {"sections",
           {{{"class_name", "invoice"}, {"pages", {0, 1}}, {"attributes", {{"total_amount", 5}}}},
            {{"class_name", "other"}, {"pages", {2}}}}}};
  const GroundTruth t = ground_truth_from_json(ok, &classes);
  CHECK(t.sections.size() == 2);
  CHECK(ground_truth_from_json(ground_truth_to_json(t), &classes).sections[0].pages == std::vector<int>{0, 1});
  json overlap = ok;
  overlap["sections"][1]["pages"] = {1, 2};
  CHECK_THROWS_AS(ground_truth_from_json(overlap, &classes), ValidationError);
  json unknown = ok;
  unknown["sections"][0]["class_name"] = "receipt";
  CHECK_THROWS_AS(ground_truth_from_json(unknown, &classes), ValidationError);
}

TEST_CASE("parse_number accepts currency formatting") {
  CHECK(parse_number("$1,234.50") == 1234.5);
  CHECK(parse_number("  -7 ") == -7.0);
  CHECK(parse_number("\xE2\x82\xAC" "12") == 12.0);
  CHECK(parse_number("+3.5") == 3.5);
  CHECK_FALSE(parse_number("twelve"));
  CHECK_FALSE(parse_number(""));
  CHECK_FALSE(parse_number("1.2.3"));
}

TEST_CASE("fnv1a64 matches published vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
}

TEST_CASE("bounding boxes validate") {
  CHECK_NOTHROW(validate_bbox({0, 0, 1, 1}, "b"));
  CHECK_THROWS_AS(validate_bbox({0, 0, 1.5, 1}, "b"), ValidationError);
  CHECK(bbox_from_json(bbox_to_json({0.1, 0.2, 0.3, 0.4}), "b") == BoundingBox{0.1, 0.2, 0.3, 0.4});
  CHECK_THROWS_AS(bbox_from_json(json::array({1, 2}), "b"), ValidationError);
}
