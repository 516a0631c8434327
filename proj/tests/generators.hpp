#pragma once
// Hand-rolled generators for the property tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "docpipe/core.hpp"
#include "docpipe/segmentation.hpp"

namespace gen {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  int uniform(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
  bool chance(double p) { return real(0.0, 1.0) < p; }
  template <class T>
  const T& pick(const std::vector<T>& v) { return v[static_cast<std::size_t>(uniform(0, static_cast<int>(v.size()) - 1))]; }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

// Small alphabet so that edits collide often; includes two multi-byte characters.
inline std::string random_string(Rng& rng, int max_len) {
  static const std::vector<std::string> alphabet = {"a", "b", "c", "A", " ", "\xc3\xa9", "\xe2\x82\xac"};
  std::string s;
  const int len = rng.uniform(0, max_len);
  for (int i = 0; i < len; ++i) s += rng.pick(alphabet);
  return s;
}

inline std::vector<docpipe::BioLabel> random_labels(Rng& rng, int max_len, const std::vector<std::string>& classes) {
  std::vector<docpipe::BioLabel> out;
  const int len = rng.uniform(0, max_len);
  for (int i = 0; i < len; ++i) {
    const int t = rng.uniform(0, 2);
    if (t == 0) out.push_back(docpipe::BioLabel::begin(rng.pick(classes)));
    else if (t == 1) out.push_back(docpipe::BioLabel::inside(rng.pick(classes)));
    else out.push_back(docpipe::BioLabel::outside());
  }
  return out;
}

// Schema with scalar attributes of mixed kinds/comparators and one record list.
inline docpipe::ClassSchema random_schema(Rng& rng) {
  using namespace docpipe;
  ClassSchema s;
  s.class_name = "doc";
  const int n = rng.uniform(1, 5);
  for (int i = 0; i < n; ++i) {
    AttributeSchema a;
    a.name = "f" + std::to_string(i);
    a.weight = rng.uniform(1, 3);
    if (rng.chance(0.5)) {
      a.kind = ValueKind::Number;
      a.comparator.kind = ComparatorKind::Numeric;
      a.comparator.tolerance = 0.5;
    } else {
      a.kind = ValueKind::String;
      a.comparator.kind = rng.chance(0.5) ? ComparatorKind::Exact : ComparatorKind::Fuzzy;
    }
    s.attributes.push_back(a);
  }
  if (rng.chance(0.7)) {
    AttributeSchema list;
    list.name = "items";
    list.kind = ValueKind::RecordList;
    list.weight = rng.uniform(1, 2);
    for (int i = 0; i < rng.uniform(1, 3); ++i) {
      AttributeSchema f;
      f.name = "g" + std::to_string(i);
      f.kind = ValueKind::String;
      f.weight = rng.uniform(1, 2);
      f.comparator.kind = ComparatorKind::Exact;
      list.fields.push_back(f);
    }
    s.attributes.push_back(list);
  }
  return s;
}

inline docpipe::json random_scalar(Rng& rng, const docpipe::AttributeSchema& a) {
  if (rng.chance(0.25)) return nullptr;
  if (a.kind == docpipe::ValueKind::Number) return rng.uniform(0, 4);
  return std::string(1, static_cast<char>('a' + rng.uniform(0, 2)));
}

// Attribute map; omitted keys, nulls and empty lists all occur.
inline docpipe::json random_document(Rng& rng, const docpipe::ClassSchema& schema) {
  docpipe::json doc = docpipe::json::object();
  for (const auto& a : schema.attributes) {
    if (rng.chance(0.15)) continue;
    if (a.kind != docpipe::ValueKind::RecordList) {
      doc[a.name] = random_scalar(rng, a);
      continue;
    }
    docpipe::json items = docpipe::json::array();
    for (int i = 0; i < rng.uniform(0, 4); ++i) {
      docpipe::json item = docpipe::json::object();
      for (const auto& f : a.fields)
        if (!rng.chance(0.2)) item[f.name] = random_scalar(rng, f);
      items.push_back(item);
    }
    doc[a.name] = items;
  }
  return doc;
}

// Weighted count of values present in an expected document.
inline double weighted_present(const docpipe::json& doc, const docpipe::ClassSchema& schema) {
  auto present = [](const docpipe::json& obj, const std::string& k) { return obj.contains(k) && !obj.at(k).is_null(); };
  double total = 0.0;
  for (const auto& a : schema.attributes) {
    if (!present(doc, a.name)) continue;
    if (a.kind != docpipe::ValueKind::RecordList) {
      total += a.weight;
      continue;
    }
    for (const auto& item : doc.at(a.name))
      for (const auto& f : a.fields)
        if (present(item, f.name)) total += a.weight * f.weight;
  }
  return total;
}

}  // namespace gen
