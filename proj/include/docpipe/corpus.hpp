#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "docpipe/core.hpp"

namespace docpipe {

struct CorpusOptions {
  int count = 10;
  int min_pages = 3;
  int max_pages = 8;
  std::uint64_t seed = 42;
  // Share of documents with one attribute rendered through its "@low" pattern.
  double low_confidence_rate = 0.0;
  // Share of document slots filled by a single unclassifiable page.
  double other_page_rate = 0.1;
  bool image_refs = true;
};

struct GeneratedPacket {
  DocumentPacket packet;
  GroundTruth truth;
  // "section_index.attribute" for every value rendered in low-confidence form.
  std::vector<std::string> low_confidence;
};

// Deterministic for a given (classes, options). Every packet is checked against the mock
// classifier and extractor before it is returned; a mismatch throws Error.
std::vector<GeneratedPacket> generate_packets(const ClassConfig& classes, const CorpusOptions& options);

struct CorpusFiles {
  std::vector<std::filesystem::path> packets;
  std::vector<std::filesystem::path> truths;
  std::filesystem::path manifest;  // manifest.csv with document and ground truth paths
  std::filesystem::path index;     // corpus_index.json
};

// Writes packets/, ground_truth/, manifest.csv and corpus_index.json under out_dir.
CorpusFiles write_corpus(const std::vector<GeneratedPacket>& packets, const std::filesystem::path& out_dir);

CorpusFiles generate_corpus(const ClassConfig& classes, const CorpusOptions& options,
                            const std::filesystem::path& out_dir);

}  // namespace docpipe
