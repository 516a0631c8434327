#include <doctest.h>

#include "docpipe/corpus.hpp"
#include "support.hpp"

using namespace docpipe;

TEST_CASE("generation is deterministic per seed") {
  const auto a = support::corpus(4, 42);
  const auto b = support::corpus(4, 42);
  const auto c = support::corpus(4, 43);
  REQUIRE(a.size() == 4);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].packet == b[i].packet);
    CHECK(ground_truth_to_json(a[i].truth) == ground_truth_to_json(b[i].truth));
  }
  CHECK_FALSE(a[0].packet == c[0].packet);
}

TEST_CASE("packets respect page bounds and label every page") {
  CorpusOptions o;
  o.count = 20;
  o.min_pages = 2;
  o.max_pages = 4;
  o.seed = 7;
  const ClassConfig classes = support::sample_classes();
  for (const auto& g : generate_packets(classes, o)) {
    CHECK(g.packet.pages.size() >= 2);
    CHECK(g.packet.pages.size() <= 4);
    std::size_t labeled = 0;
    for (const auto& s : g.truth.sections) labeled += s.pages.size();
    CHECK(labeled == g.packet.pages.size());
    CHECK_NOTHROW(ground_truth_from_json(ground_truth_to_json(g.truth), &classes));
    for (const auto& p : g.packet.pages) CHECK(p.image_ref);
  }
}

TEST_CASE("low-confidence rate controls injected variants") {
  std::size_t none = 0, all = 0;
  for (const auto& g : support::corpus(6, 3, 0.0)) none += g.low_confidence.size();
  for (const auto& g : support::corpus(6, 3, 1.0)) all += g.low_confidence.size();
  CHECK(none == 0);
  CHECK(all > 0);
}

TEST_CASE("corpus files on disk") {
  support::TempDir dir;
  CorpusOptions o;
  o.count = 2;
  o.image_refs = false;
  const CorpusFiles files = generate_corpus(support::sample_classes(), o, dir.path());
  CHECK(files.packets.size() == 2);
  CHECK(std::filesystem::exists(files.manifest));
  CHECK(std::filesystem::exists(files.index));
  CHECK(support::slurp(files.manifest).rfind("document_path,ground_truth_path\n", 0) == 0);
  const DocumentPacket p = load_packet(files.packets[0]);
  CHECK_FALSE(p.pages[0].image_ref);
}

TEST_CASE("invalid options are rejected") {
  CorpusOptions o;
  o.min_pages = 5;
  o.max_pages = 2;
  CHECK_THROWS(generate_packets(support::sample_classes(), o));
  o = {};
  o.count = -1;
  CHECK_THROWS(generate_packets(support::sample_classes(), o));
}
