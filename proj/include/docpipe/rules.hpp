#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "docpipe/extraction.hpp"
#include "docpipe/segmentation.hpp"

namespace docpipe {

struct Fact {
  std::string fact_name;
  json value;
  std::string section_id;
  std::string attribute;
  double confidence = 1.0;
};

// Values of each fact name, in section order.
using FactTable = std::map<std::string, std::vector<json>>;

// Boolean condition over fact names.
//   operators:   == != < <= > >= contains exists
//   connectives: and or not, parentheses
//   literals:    numbers, 'single' or "double" quoted strings
// A comparison holds only when it holds for every occurrence of the facts it names.
class Condition {
 public:
  struct Node;

  Condition() = default;
  // Throws ExpressionError on syntax errors or undeclared fact names.
  static Condition parse(std::string_view text, const std::set<std::string>& declared);

  bool evaluate(const FactTable& facts) const;
  // Expression with fact values substituted, e.g. "900 <= 500".
  std::string render(const FactTable& facts) const;
  Condition negated() const;
  const std::set<std::string>& referenced() const { return referenced_; }
  const std::string& text() const { return text_; }

 private:
  std::shared_ptr<const Node> root_;
  std::set<std::string> referenced_;
  std::string text_;
};

struct FactBinding {
  std::string name;
  std::string class_name;
  std::string attribute;
};

struct RuleSpec {
  std::string rule_id;
  std::string description;
  std::vector<FactBinding> facts;
  Condition condition;
  std::vector<std::string> recommendations;
};

RuleSpec make_rule(std::string rule_id, std::vector<FactBinding> facts, std::string_view condition,
                   std::vector<std::string> recommendations = {}, std::string description = {});

std::vector<RuleSpec> rules_from_json(const json& doc, const ClassConfig* classes = nullptr);
std::vector<RuleSpec> load_rules(const std::filesystem::path& path, const ClassConfig* classes = nullptr);

enum class DeterminationStatus { Pass, Fail, InformationNotFound };
std::string_view to_string(DeterminationStatus status);

struct Determination {
  DeterminationStatus status = DeterminationStatus::InformationNotFound;
  std::vector<Fact> evidence;
  std::string reasoning;
  std::vector<std::string> recommendations;
};

json to_json(const Fact& fact);
json to_json(const Determination& determination);

using SectionResult = std::pair<Section, ExtractionResult>;

// Every occurrence of each bound (class, attribute) among successful extractions, in section order.
std::vector<Fact> curate_facts(const RuleSpec& rule, std::span<const SectionResult> sections);

Determination consolidate(const RuleSpec& rule, std::span<const Fact> facts);

std::vector<std::pair<std::string, Determination>> validate_all(std::span<const RuleSpec> rules,
                                                                 std::span<const SectionResult> sections);

}  // namespace docpipe
