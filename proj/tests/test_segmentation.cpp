#include <doctest.h>

#include <atomic>
#include <thread>

#include "docpipe/segmentation.hpp"
#include "generators.hpp"
#include "support.hpp"

using namespace docpipe;

namespace {

std::vector<BioLabel> labels(std::initializer_list<const char*> text) {
  std::vector<BioLabel> out;
  for (const char* t : text) out.push_back(BioLabel::parse(t));
  return out;
}

DocumentPacket text_packet(std::vector<std::string> pages) {
  DocumentPacket p;
  p.packet_id = "t";
  for (std::size_t i = 0; i < pages.size(); ++i) {
    Page pg;
    pg.index = static_cast<int>(i);
    pg.lines.push_back({pages[i], 99.0, {0.1, 0.1, 0.9, 0.2}});
    p.pages.push_back(pg);
  }
  return p;
}

// Counts concurrent calls; labels every page B-invoice.
class SlowClassifier : public ClassifierBackend {
 public:
  std::string name() const override { return "slow"; }
  BioLabel classify(const ClassifyRequest&) override {
    const int now = ++in_flight;
    int prev = peak.load();
    while (now > prev && !peak.compare_exchange_weak(prev, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --in_flight;
    return BioLabel::begin("invoice");
  }
  std::atomic<int> in_flight{0}, peak{0};
};

}  // namespace

TEST_CASE("label text round trip") {
  CHECK(BioLabel::parse("B-invoice") == BioLabel::begin("invoice"));
  CHECK(BioLabel::parse("I-w2").str() == "I-w2");
  CHECK(BioLabel::parse("O") == BioLabel::outside());
  CHECK_THROWS(BioLabel::parse("X-invoice"));
  CHECK_THROWS(BioLabel::parse("B-"));
}

TEST_CASE("decode_bio examples") {
  SUBCASE("two documents") {
    const auto s = decode_bio(labels({"B-invoice", "I-invoice", "B-w2"}));
    REQUIRE(s.size() == 2);
    CHECK(s[0].class_name == "invoice");
    CHECK(s[0].page_indices == std::vector<int>{0, 1});
    CHECK(s[1].page_indices == std::vector<int>{2});
  }
  SUBCASE("orphan I opens a section") {
    const auto s = decode_bio(labels({"I-w2", "I-w2"}));
    REQUIRE(s.size() == 1);
    CHECK(s[0].class_name == "w2");
    CHECK(s[0].page_indices == std::vector<int>{0, 1});
  }
  SUBCASE("I with a different class starts a new section") {
    const auto s = decode_bio(labels({"B-invoice", "I-w2"}));
    REQUIRE(s.size() == 2);
    CHECK(s[1].class_name == "w2");
  }
  SUBCASE("each O page is its own other section") {
    const auto s = decode_bio(labels({"O", "O", "B-invoice", "O"}));
    REQUIRE(s.size() == 4);
    CHECK(s[0].class_name == kOtherClass);
    CHECK(s[0].page_indices == std::vector<int>{0});
    CHECK(s[1].page_indices == std::vector<int>{1});
    CHECK(s[2].class_name == "invoice");
    CHECK(s[3].page_indices == std::vector<int>{3});
  }
  SUBCASE("empty input") { CHECK(decode_bio(std::vector<BioLabel>{}).empty()); }
  SUBCASE("section ids are positional") {
    const auto s = decode_bio(labels({"B-invoice", "B-invoice"}));
    CHECK(s[0].section_id == "s0");
    CHECK(s[1].section_id == "s1");
  }
}

TEST_CASE("decode_bio partitions and re-encoding is a fixed point (fuzz)") {
  gen::Rng rng(11);
  const std::vector<std::string> classes = {"invoice", "w2", "bank_statement"};
  for (int trial = 0; trial < 2000; ++trial) {
    const auto seq = gen::random_labels(rng, 50, classes);
    const auto sections = decode_bio(seq);
    std::vector<int> pages;
    for (const auto& s : sections) {
      REQUIRE_FALSE(s.page_indices.empty());
      for (std::size_t k = 1; k < s.page_indices.size(); ++k) REQUIRE(s.page_indices[k] == s.page_indices[k - 1] + 1);
      pages.insert(pages.end(), s.page_indices.begin(), s.page_indices.end());
    }
    REQUIRE(pages.size() == seq.size());
    for (std::size_t i = 0; i < pages.size(); ++i) REQUIRE(pages[i] == static_cast<int>(i));
    REQUIRE(decode_bio(encode_bio(sections)) == sections);
  }
}

TEST_CASE("sections serialize") {
  const auto s = decode_bio(labels({"B-invoice", "I-invoice", "O"}));
  CHECK(sections_from_json(sections_to_json(s)) == s);
}

TEST_CASE("mock classifier uses keyword counts and the previous page") {
  const ClassConfig classes = support::sample_classes();
  CHECK(MockClassifier::predict("INVOICE\nInvoice Number: A-1", classes) == "invoice");
  CHECK(MockClassifier::predict("Form W-2 Wage and Tax Statement", classes) == "w2");
  CHECK(MockClassifier::predict("lorem ipsum", classes).empty());

  const DocumentPacket p = text_packet({"INVOICE", "INVOICE (continued)", "FORM W-2", "nothing here", "BANK STATEMENT"});
  const auto pc = classify_pages(p, classes, *support::mock_classifier());
  std::vector<std::string> got;
  for (const auto& l : pc.labels) got.push_back(l.str());
  CHECK(got == std::vector<std::string>{"B-invoice", "I-invoice", "B-w2", "O", "B-bank_statement"});
}

TEST_CASE("classify_pages respects the concurrency bound") {
  const ClassConfig classes = support::sample_classes();
  const DocumentPacket p = text_packet(std::vector<std::string>(8, "INVOICE"));
  SlowClassifier slow;
  const auto pc = classify_pages(p, classes, slow, 2);
  CHECK(pc.labels.size() == 8);
  CHECK(slow.peak.load() <= 2);
  CHECK(slow.peak.load() >= 1);
  SlowClassifier serial;
  classify_pages(p, classes, serial, 1);
  CHECK(serial.peak.load() == 1);
}

TEST_CASE("sectionize composes classification and decoding") {
  const ClassConfig classes = support::sample_classes();
  const DocumentPacket p = text_packet({"INVOICE", "INVOICE (continued)", "FORM W-2"});
  const auto s = sectionize(p, classes, *support::mock_classifier());
  REQUIRE(s.size() == 2);
  CHECK(s[0].page_indices == std::vector<int>{0, 1});
  CHECK(s[1].class_name == "w2");
}
