#include <doctest.h>

#include "docpipe/backends.hpp"
#include "docpipe/extraction.hpp"
#include "support.hpp"

using namespace docpipe;

namespace {

DocumentPacket invoice_packet(bool with_images = true) {
  DocumentPacket p;
  p.packet_id = "inv";
  Page a;
  a.index = 0;
  a.lines = {{"INVOICE", 99.0, {0.1, 0.05, 0.3, 0.08}},
             {"Invoice Number: INV-1001", 96.0, {0.1, 0.10, 0.5, 0.13}},
             {"Vendor: Acme Supply", 95.0, {0.1, 0.14, 0.5, 0.17}},
             {"Total Due: $1,250.00", 88.0, {0.1, 0.18, 0.4, 0.21}}};
  Page b;
  b.index = 1;
  b.lines = {{"INVOICE (continued)", 99.0, {0.1, 0.05, 0.3, 0.08}},
             {"Line: Widget | Qty 3 | $30.00", 90.0, {0.1, 0.10, 0.7, 0.13}},
             {"Line: Gadget | Qty 1 | $12.50", 90.0, {0.1, 0.14, 0.7, 0.17}}};
  if (with_images) {
    a.image_ref = "img/0.png";
    b.image_ref = "img/1.png";
  }
  p.pages = {a, b};
  return p;
}

Section invoice_section() { return {"s0", "invoice", {0, 1}}; }

const ClassSchema& invoice_schema() {
  static const ClassConfig classes = support::sample_classes();
  return *find_class(classes, "invoice");
}

}  // namespace

TEST_CASE("modality names") {
  CHECK(parse_modality("ocr") == Modality::Ocr);
  CHECK(parse_modality("image") == Modality::Image);
  CHECK(parse_modality("ocr+image") == Modality::OcrImage);
  CHECK(to_string(Modality::OcrImage) == "ocr+image");
  CHECK_THROWS(parse_modality("audio"));
}

TEST_CASE("build_request assembles text, lines and images") {
  const ModelRequest r = build_request(invoice_section(), invoice_packet(), invoice_schema(), Modality::OcrImage, true);
  CHECK(r.class_name == "invoice");
  CHECK(r.attributes.size() == invoice_schema().attributes.size());
  CHECK(r.image_refs == std::vector<std::string>{"img/0.png", "img/1.png"});
  CHECK(r.lines.size() == 7);
  CHECK(r.section_text.substr(r.lines[1].offset, r.lines[1].length) == "Invoice Number: INV-1001");
  REQUIRE(r.few_shot.size() == 1);
  CHECK(r.few_shot[0].attribute == "total_amount");
  CHECK(r.prompt.find("Total Due: $1,250.00") != std::string::npos);
  CHECK(r.prompt.find("total_amount") != std::string::npos);

  const ModelRequest img = build_request(invoice_section(), invoice_packet(), invoice_schema(), Modality::Image, false);
  CHECK(img.section_text.empty());
  CHECK(img.few_shot.empty());
}

TEST_CASE("build_request input failures") {
  CHECK_THROWS_AS(build_request(invoice_section(), invoice_packet(false), invoice_schema(), Modality::Image, false),
                  MissingImage);
  DocumentPacket blank = invoice_packet();
  for (auto& pg : blank.pages) pg.lines.clear();
  CHECK_THROWS_AS(build_request(invoice_section(), blank, invoice_schema(), Modality::Ocr, false), EmptyInput);
  CHECK_THROWS_AS(build_request({"s0", "w2", {0}}, invoice_packet(), invoice_schema(), Modality::Ocr, false),
                  ValidationError);
}

TEST_CASE("validate_output accepts bare values and envelopes") {
  const auto out = validate_output(
      R"({"invoice_number": "A-1", "total_amount": {"value": "$1,250.00", "confidence": 0.6, "bbox": [0.1,0.1,0.2,0.2],
          "justification": "seen"}, "vendor_name": null, "surprise": 1})",
      invoice_schema());
  REQUIRE(out.attributes.size() == 2);
  CHECK(out.attributes[0].name == "invoice_number");
  CHECK(out.attributes[0].confidence == 1.0);
  CHECK(out.attributes[1].value == 1250.0);
  CHECK(out.attributes[1].confidence == 0.6);
  CHECK(out.attributes[1].bbox == BoundingBox{0.1, 0.1, 0.2, 0.2});
  CHECK(out.attributes[1].justification == "seen");
  CHECK(out.warnings.size() == 1);
}

TEST_CASE("validate_output structure errors") {
  CHECK_THROWS_AS(validate_output("The invoice total is $5.", invoice_schema()), StructureError);
  CHECK_THROWS_AS(validate_output("[1,2]", invoice_schema()), StructureError);
  CHECK_THROWS_AS(validate_output(R"({"total_amount": "lots"})", invoice_schema()), StructureError);
  CHECK_THROWS_AS(validate_output(R"({"total_amount": {"value": 1, "confidence": 2}})", invoice_schema()),
                  StructureError);
  CHECK_THROWS_AS(validate_output(R"({"line_items": [1]})", invoice_schema()), StructureError);
  CHECK_THROWS_AS(validate_output(R"({"total_amount": {"confidence": 0.5}})", invoice_schema()), StructureError);
}

TEST_CASE("coerce_value per kind") {
  const auto& s = invoice_schema();
  CHECK(coerce_value("$3.50", *s.find_attribute("total_amount")) == json(3.5));
  CHECK_FALSE(coerce_value(json(3), *s.find_attribute("invoice_number")));
  const auto rows = coerce_value(json::parse(R"([{"description":"x","quantity":"2","extra":1}])"),
                                 *s.find_attribute("line_items"));
  REQUIRE(rows);
  CHECK((*rows)[0] == json{{"description", "x"}, {"quantity", 2.0}});
}

TEST_CASE("mock extraction recovers patterns with confidence and boxes") {
  const ModelRequest r = build_request(invoice_section(), invoice_packet(), invoice_schema(), Modality::Ocr, false);
  const auto out = validate_output(mock_extract(r, invoice_schema()), invoice_schema());
  std::map<std::string, AttributeValue> by_name;
  for (const auto& a : out.attributes) by_name[a.name] = a;
  CHECK(by_name.at("invoice_number").value == "INV-1001");
  CHECK(by_name.at("invoice_number").confidence == kMockConfidence);
  CHECK(by_name.at("invoice_number").bbox == BoundingBox{0.1, 0.10, 0.5, 0.13});
  CHECK(by_name.at("total_amount").value == 1250.0);
  CHECK(by_name.at("vendor_name").value == "Acme Supply");
  CHECK_FALSE(by_name.count("invoice_date"));
  const json items = by_name.at("line_items").value;
  REQUIRE(items.size() == 2);
  CHECK(items[1] == json{{"description", "Gadget"}, {"quantity", 1.0}, {"amount", 12.5}});
}

TEST_CASE("low-confidence pattern variant") {
  DocumentPacket p = invoice_packet();
  p.pages[0].lines[3].text = "Total (smudged): $1,250.00";
  const ModelRequest r = build_request(invoice_section(), p, invoice_schema(), Modality::Ocr, false);
  const auto out = validate_output(mock_extract(r, invoice_schema()), invoice_schema());
  for (const auto& a : out.attributes)
    if (a.name == "total_amount") CHECK(a.confidence == kMockLowConfidence);
}

TEST_CASE("extract_section succeeds with cost and tokens") {
  MockExtractor mock(support::sample_classes());
  PriceTable prices({{"mock", {3.0, 15.0}}});
  ExtractOptions o;
  o.prices = &prices;
  const auto r = extract_section(invoice_section(), invoice_packet(), invoice_schema(), mock, Modality::Ocr, o);
  CHECK(r.ok());
  CHECK(r.attempts == 1);
  CHECK(r.input_tokens > 0);
  CHECK(r.output_tokens > 0);
  CHECK(r.cost == doctest::Approx(r.input_tokens / 1000.0 * 3.0 + r.output_tokens / 1000.0 * 15.0).epsilon(1e-12));
  CHECK(r.raw_outputs.size() == 1);
  CHECK(r.find("total_amount")->value == 1250.0);
}

TEST_CASE("extract_section exhausts retries on prose and on outages") {
  support::RecordingSleeper sleeps;
  ExtractOptions o;
  o.retry.base_delay = Millis(100.0);
  o.retry.jitter = 0.0;
  o.sleeper = sleeps.sleeper();

  ProseExtractor prose;
  const auto r = extract_section(invoice_section(), invoice_packet(), invoice_schema(), prose, Modality::Ocr, o);
  CHECK_FALSE(r.ok());
  CHECK(r.failure_kind == FailureKind::Structure);
  CHECK(r.attempts == 3);
  CHECK(r.raw_outputs.size() == 3);
  CHECK(r.attributes.empty());

  FailingExtractor failing;
  const auto f = extract_section(invoice_section(), invoice_packet(), invoice_schema(), failing, Modality::Ocr, o);
  CHECK(f.failure_kind == FailureKind::Backend);
  CHECK(f.attempts == 3);

  const auto delays = sleeps.delays();
  REQUIRE(delays.size() == 4);
  CHECK(delays[0].count() == 100.0);
  CHECK(delays[1].count() == 200.0);
}

TEST_CASE("extract_section recovers after a transient outage") {
  support::RecordingSleeper sleeps;
  ExtractOptions o;
  o.sleeper = sleeps.sleeper();
  support::FlakyExtractor flaky(support::mock_extractor(), 1);
  const auto r = extract_section(invoice_section(), invoice_packet(), invoice_schema(), flaky, Modality::Ocr, o);
  CHECK(r.ok());
  CHECK(r.attempts == 2);
  CHECK(sleeps.delays().size() == 1);
}

TEST_CASE("extract_section reports input failures without calling the backend") {
  support::InstrumentedExtractor counted(support::mock_extractor());
  const auto r = extract_section(invoice_section(), invoice_packet(false), invoice_schema(), counted, Modality::Image, {});
  CHECK(r.failure_kind == FailureKind::Input);
  CHECK(counted.calls() == 0);
}

TEST_CASE("extraction results serialize") {
  MockExtractor mock(support::sample_classes());
  const auto r = extract_section(invoice_section(), invoice_packet(), invoice_schema(), mock, Modality::Ocr, {});
  const auto back = extraction_result_from_json(to_json(r));
  CHECK(back.attributes == r.attributes);
  CHECK(back.section_id == r.section_id);
  CHECK(back.attempts == r.attempts);
}

TEST_CASE("price table lookup") {
  const PriceTable t = PriceTable::load(support::sample_dir() / "prices.json");
  CHECK(t.cost("mock", 1000, 1000) == doctest::Approx(0.018));
  CHECK(t.cost("unknown", 1000, 1000) == 0.0);
}
