#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "docpipe/core.hpp"
#include "docpipe/segmentation.hpp"

namespace docpipe {

// ---------------------------------------------------------------------------
// Comparators

std::string normalize_text(std::string_view text, bool lower_case, bool trim);

// Levenshtein distance over Unicode code points (bytes when the input is not valid UTF-8).
std::size_t edit_distance(std::string_view a, std::string_view b);

// 1 - distance / max length after normalization; two empty strings are identical.
double similarity(std::string_view a, std::string_view b, bool normalize_case = true, bool trim = true);

// Intersection over union; a zero-area union yields 0.
double bbox_iou(const BoundingBox& a, const BoundingBox& b);

struct MatchOutcome {
  bool matched = false;
  double score = 0.0;
  std::string detail;
};

// Throws KindMismatch when a value does not fit the comparator.
MatchOutcome compare_value(const json& expected, const json& predicted, const ComparatorSpec& spec);

// ---------------------------------------------------------------------------
// Assignment

class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  CostMatrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // sorted by row
  double total_cost = 0.0;
};

// Minimum-cost assignment of size min(rows, cols). Among optimal assignments the
// lexicographically smallest sorted pair list is returned. Entries must be finite and >= 0.
Assignment hungarian_assign(const CostMatrix& cost);

// ---------------------------------------------------------------------------
// Counting

struct Counts {
  double tp = 0.0;
  double fp = 0.0;
  double fn = 0.0;
  double weight = 1.0;

  Counts& operator+=(const Counts& other);
};

// Keyed by attribute name; list subfields are keyed "list.field".
using FieldCounts = std::map<std::string, Counts>;

void merge_into(FieldCounts& into, const FieldCounts& from);

struct ItemPair {
  std::size_t expected_index = 0;
  std::size_t predicted_index = 0;
  double score = 0.0;
};

struct ListMatch {
  std::vector<ItemPair> pairs;
  FieldCounts counts;
};

// Pairs records by Hungarian assignment over 1 - weighted matched-subfield fraction.
ListMatch match_lists(const json& expected, const json& predicted, std::span<const AttributeSchema> item_schema,
                      double list_weight = 1.0, const std::string& prefix = {});

FieldCounts evaluate_document(const json& expected, const json& predicted, const ClassSchema& schema);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

Prf prf(double tp, double fp, double fn);

struct FieldReport {
  Counts counts;
  Prf metrics;
};

struct EvaluationReport {
  Prf micro;
  Prf macro;
  std::map<std::string, FieldReport> per_field;
  double extraction_score = 0.0;  // weighted micro F1
  std::size_t documents = 0;
  std::size_t failed = 0;
};

EvaluationReport aggregate(std::span<const FieldCounts> documents, std::size_t failed_count);

json to_json(const EvaluationReport& report);
std::string render_table(const EvaluationReport& report);

// ---------------------------------------------------------------------------
// Splitting

struct PacketSplit {
  std::string packet_id;
  std::size_t pages = 0;
  std::size_t pages_correct = 0;
  std::size_t gt_sections = 0;
  std::size_t ordered_matches = 0;
  std::size_t unordered_matches = 0;
};

struct SplitReport {
  double page_accuracy = 0.0;
  double ordered_accuracy = 0.0;
  double unordered_accuracy = 0.0;
  std::vector<PacketSplit> packets;
};

std::vector<LabeledSection> to_labeled(std::span<const Section> sections);

// Throws PartitionError unless both lists partition 0..page_count-1.
PacketSplit split_metrics(std::span<const LabeledSection> truth, std::span<const LabeledSection> predicted,
                          std::size_t page_count, std::string packet_id = {});

SplitReport aggregate_split(std::vector<PacketSplit> packets);

json to_json(const SplitReport& report);

}  // namespace docpipe
