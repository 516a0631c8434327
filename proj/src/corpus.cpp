#include "docpipe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <regex>

#include "docpipe/evaluation.hpp"
#include "docpipe/extraction.hpp"
#include "docpipe/segmentation.hpp"

namespace docpipe {

namespace fs = std::filesystem;

namespace {

constexpr int kMaxTries = 200;

const std::vector<std::string> kFirstNames = {"Maria", "James", "Aiko", "Tomas", "Priya", "Oluwaseun", "Chen", "Fatima",
                                              "Lars", "Gabriela", "Noah", "Ines"};
const std::vector<std::string> kLastNames = {"Alvarez", "Okafor", "Lindqvist", "Nakamura", "Patel", "Moreau", "Kowalski",
                                             "Haddad", "Brennan", "Ferreira", "Yilmaz", "Osei"};
const std::vector<std::string> kCompanyHeads = {"Northwind", "Bluefield", "Cedar", "Harbor", "Summit", "Ironwood",
                                                "Meridian", "Kestrel", "Granite", "Lakeshore"};
const std::vector<std::string> kCompanyTails = {"Traders", "Logistics", "Supply Co", "Holdings", "Partners", "Works",
                                                "Systems", "Foods"};
const std::vector<std::string> kProducts = {"Office chairs", "Printer toner", "Network cables", "Desk lamps",
                                            "Paper reams", "Coffee beans", "Safety gloves", "Monitor stands",
                                            "Grocery store", "Fuel station", "Utility payment", "Transfer in"};
const std::vector<std::string> kFiller = {"Please retain this document for your records.",
                                          "Questions may be directed to customer care.",
                                          "Reference copy for internal filing.",
                                          "All amounts are shown in US dollars.",
                                          "Thank you for your business.",
                                          "This page intentionally continues the previous page."};
const std::vector<std::string> kOtherLines = {"FAX COVER SHEET", "Routing slip for the records department",
                                              "Scanned attachment, no further content", "Handwritten note: call back Monday",
                                              "Courier receipt"};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : gen_() % n; }
  int between(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }
  double unit() { return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0); }
  template <class T>
  const T& pick(const std::vector<T>& v) { return v[below(v.size())]; }

 private:
  std::mt19937_64 gen_;
};

std::string currency(long cents) {
  std::string digits = std::to_string(cents / 100);
  for (int i = static_cast<int>(digits.size()) - 3; i > 0; i -= 3) digits.insert(static_cast<std::size_t>(i), ",");
  char frac[4];
  std::snprintf(frac, sizeof frac, "%02ld", cents % 100);
  return "$" + digits + "." + frac;
}

struct Rendered {
  std::string text;
  json value;
};

Rendered random_value(ValueKind kind, Rng& rng) {
  switch (kind) {
    case ValueKind::Number:
      switch (rng.below(3)) {
        case 0: {
          const long cents = rng.between(1000, 2500000);
          return {currency(cents), json(static_cast<double>(cents) / 100.0)};
        }
        case 1: {
          const int year = rng.between(2015, 2025);
          return {std::to_string(year), json(year)};
        }
        default: {
          const int n = rng.between(1, 40);
          return {std::to_string(n), json(n)};
        }
      }
    case ValueKind::Date: {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", rng.between(2019, 2025), rng.between(1, 12), rng.between(1, 28));
      return {buf, json(buf)};
    }
    case ValueKind::String:
    default:
      switch (rng.below(5)) {
        case 0: {
          const std::string s = rng.pick(kFirstNames) + " " + rng.pick(kLastNames);
          return {s, json(s)};
        }
        case 1: {
          const std::string s = rng.pick(kCompanyHeads) + " " + rng.pick(kCompanyTails);
          return {s, json(s)};
        }
        case 2: {
          const std::string& s = rng.pick(kProducts);
          return {s, json(s)};
        }
        case 3: {
          std::string s;
          for (int i = 0; i < 3; ++i) s += static_cast<char>('A' + rng.below(26));
          s += "-" + std::to_string(rng.between(1000, 99999));
          return {s, json(s)};
        }
        default: {
          char buf[16];
          std::snprintf(buf, sizeof buf, "%04d-%04d", rng.between(0, 9999), rng.between(0, 9999));
          return {buf, json(std::string(buf))};
        }
      }
  }
}

std::string fill(std::string tmpl, const std::string& key, const std::string& text) {
  const std::string placeholder = "{" + key + "}";
  for (auto pos = tmpl.find(placeholder); pos != std::string::npos; pos = tmpl.find(placeholder, pos + text.size()))
    tmpl.replace(pos, placeholder.size(), text);
  return tmpl;
}

std::string trimmed(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

bool same_value(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) return std::fabs(a.get<double>() - b.get<double>()) < 1e-9;
  return a == b;
}

// True when `pattern` recovers exactly `expected` from `text`.
bool recovers(const MockPattern& pattern, const std::string& text, const AttributeSchema& attr, const json& expected) {
  std::smatch m;
  std::regex re(pattern.regex);
  if (!std::regex_search(text, m, re) || !m[1].matched) return false;
  auto value = coerce_value(json(trimmed(m[1].str())), attr);
  return value && same_value(*value, expected);
}

struct DocPlan {
  std::string class_name;  // kOtherClass for filler pages
  int pages = 1;
};

struct DocumentText {
  std::vector<std::vector<std::string>> pages;
  json attributes = json::object();
  std::vector<std::string> low;
};

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string scalar_line(const AttributeSchema& attr, std::size_t variant, Rng& rng, json& value_out) {
  const std::string& tmpl = attr.mock_templates[variant];
  for (int t = 0; t < kMaxTries; ++t) {
    Rendered r = random_value(attr.kind, rng);
    const std::string line = fill(tmpl, "value", r.text);
    if (!recovers(attr.mock_patterns[variant], line, attr, r.value)) continue;
    // A low-confidence rendering must not be picked up by an earlier pattern.
    bool shadowed = false;
    for (std::size_t k = 0; k < variant; ++k)
      if (std::regex_search(line, std::regex(attr.mock_patterns[k].regex))) shadowed = true;
    if (shadowed) continue;
    value_out = std::move(r.value);
    return line;
  }
  throw Error("corpus: cannot render a value for attribute '" + attr.name + "' that its mock pattern recovers");
}

std::string row_line(const AttributeSchema& list, Rng& rng, json& row_out) {
  const std::string& tmpl = list.mock_templates.front();
  for (int t = 0; t < kMaxTries; ++t) {
    std::string line = tmpl;
    json row = json::object();
    for (const auto& field : list.fields) {
      Rendered r = random_value(field.kind, rng);
      line = fill(line, field.name, r.text);
      row[field.name] = std::move(r.value);
    }
    std::smatch m;
    std::regex outer(list.mock_patterns.front().regex);
    if (!std::regex_search(line, m, outer) || !m[1].matched) continue;
    const std::string row_text = m[1].str();
    bool ok = true;
    for (const auto& field : list.fields)
      if (field.mock_patterns.empty() || !recovers(field.mock_patterns.front(), row_text, field, row[field.name])) ok = false;
    if (!ok) continue;
    row_out = std::move(row);
    return line;
  }
  throw Error("corpus: cannot render a row for list '" + list.name + "' that its mock patterns recover");
}

DocumentText render_document(const ClassSchema& cls, int pages, bool inject_low, Rng& rng) {
  DocumentText doc;
  doc.pages.resize(static_cast<std::size_t>(pages));
  const std::string header = upper(cls.keywords.front());
  auto& first = doc.pages.front();
  first.push_back(header);

  std::vector<const AttributeSchema*> low_candidates;
  for (const auto& attr : cls.attributes) {
    if (attr.kind == ValueKind::RecordList) continue;
    for (std::size_t k = 0; k < attr.mock_patterns.size() && k < attr.mock_templates.size(); ++k)
      if (attr.mock_patterns[k].low_confidence) low_candidates.push_back(&attr);
  }
  const AttributeSchema* low_attr = inject_low && !low_candidates.empty() ? rng.pick(low_candidates) : nullptr;

  for (const auto& attr : cls.attributes) {
    if (attr.mock_patterns.empty() || attr.mock_templates.empty())
      throw Error("corpus: attribute '" + cls.class_name + "." + attr.name + "' needs mock_pattern and mock_template");
    if (attr.kind == ValueKind::RecordList) {
      json rows = json::array();
      const int n = rng.between(1, 3);
      for (int i = 0; i < n; ++i) {
        json row;
        first.push_back(row_line(attr, rng, row));
        rows.push_back(std::move(row));
      }
      doc.attributes[attr.name] = std::move(rows);
      continue;
    }
    std::size_t variant = 0;
    if (&attr == low_attr) {
      for (std::size_t k = 0; k < attr.mock_patterns.size() && k < attr.mock_templates.size(); ++k)
        if (attr.mock_patterns[k].low_confidence) {
          variant = k;
          break;
        }
      doc.low.push_back(attr.name);
    }
    json value;
    first.push_back(scalar_line(attr, variant, rng, value));
    doc.attributes[attr.name] = std::move(value);
  }
  first.push_back(rng.pick(kFiller));
  for (std::size_t p = 1; p < doc.pages.size(); ++p) {
    doc.pages[p].push_back(header + " (continued)");
    const int n = rng.between(1, 3);
    for (int i = 0; i < n; ++i) doc.pages[p].push_back(rng.pick(kFiller));
  }
  return doc;
}

Page make_page(int index, const std::vector<std::string>& lines, const std::string& packet_id, bool image, Rng& rng) {
  Page page;
  page.index = index;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    TextLine line;
    line.text = lines[i];
    line.confidence = static_cast<double>(rng.between(900, 999)) / 10.0;
    const double y0 = 0.05 + 0.04 * static_cast<double>(i);
    const double width = std::min(0.84, 0.012 * static_cast<double>(lines[i].size()));
    line.bbox = BoundingBox{0.08, std::min(y0, 0.96), 0.08 + width, std::min(y0 + 0.03, 0.99)};
    page.lines.push_back(std::move(line));
  }
  if (image) page.image_ref = "images/" + packet_id + "/page-" + std::to_string(index) + ".png";
  return page;
}

void self_check(const GeneratedPacket& g, const ClassConfig& classes) {
  MockClassifier classifier;
  const auto sections = sectionize(g.packet, classes, classifier, 1);
  if (sections.size() != g.truth.sections.size())
    throw Error("corpus: " + g.packet.packet_id + ": mock classifier does not reproduce the section layout");
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const auto& s = sections[i];
    const auto& t = g.truth.sections[i];
    if (s.class_name != t.class_name || s.page_indices != t.pages)
      throw Error("corpus: " + g.packet.packet_id + ": section " + std::to_string(i) + " differs from the mock split");
    const ClassSchema* schema = t.class_name == kOtherClass ? nullptr : find_class(classes, t.class_name);
    if (!schema || schema->attributes.empty()) continue;
    const ModelRequest request = build_request(s, g.packet, *schema, Modality::Ocr, false);
    const ValidatedOutput out = validate_output(mock_extract(request, *schema), *schema);
    for (const auto& attr : schema->attributes) {
      const auto it = std::find_if(out.attributes.begin(), out.attributes.end(),
                                   [&](const AttributeValue& v) { return v.name == attr.name; });
      if (it == out.attributes.end() || !t.attributes.contains(attr.name))
        throw Error("corpus: " + g.packet.packet_id + ": attribute " + attr.name + " not recovered");
      const FieldCounts counts = evaluate_document(json{{attr.name, t.attributes[attr.name]}},
                                                   json{{attr.name, it->value}}, *schema);
      for (const auto& [name, c] : counts)
        if (c.fp != 0.0 || c.fn != 0.0)
          throw Error("corpus: " + g.packet.packet_id + ": attribute " + name + " recovered with a different value");
      const std::string key = std::to_string(i) + "." + attr.name;
      const bool low = std::find(g.low_confidence.begin(), g.low_confidence.end(), key) != g.low_confidence.end();
      if ((it->confidence < kDefaultConfidenceThreshold) != low)
        throw Error("corpus: " + g.packet.packet_id + ": unexpected confidence for " + key);
    }
  }
}

}  // namespace

std::vector<GeneratedPacket> generate_packets(const ClassConfig& classes, const CorpusOptions& options) {
  if (options.count < 0) throw ValidationError("count: must be >= 0");
  if (options.min_pages < 1 || options.max_pages < options.min_pages)
    throw ValidationError("pages: need 1 <= min_pages <= max_pages");
  std::vector<const ClassSchema*> usable;
  for (const auto& c : classes)
    if (c.class_name != kOtherClass && !c.keywords.empty()) usable.push_back(&c);
  if (usable.empty()) throw ValidationError("classes: the generator needs at least one class with keywords");

  Rng rng(options.seed);
  std::vector<GeneratedPacket> out;
  for (int n = 0; n < options.count; ++n) {
    char id[32];
    std::snprintf(id, sizeof id, "packet-%03d", n);
    GeneratedPacket g;
    g.packet.packet_id = id;
    g.truth.packet_id = id;

    const int total = rng.between(options.min_pages, options.max_pages);
    std::vector<DocPlan> plan;
    std::string previous;
    for (int remaining = total; remaining > 0;) {
      // Two adjacent documents of one class would read as one under B/I decoding.
      if (rng.unit() < options.other_page_rate) {
        plan.push_back({std::string(kOtherClass), 1});
        previous = kOtherClass;
        --remaining;
        continue;
      }
      std::vector<const ClassSchema*> choices;
      for (const auto* c : usable)
        if (c->class_name != previous) choices.push_back(c);
      const ClassSchema* cls = rng.pick(choices);
      const int pages = rng.between(1, std::min(3, remaining));
      plan.push_back({cls->class_name, pages});
      previous = cls->class_name;
      remaining -= pages;
    }

    int page_index = 0;
    for (std::size_t d = 0; d < plan.size(); ++d) {
      LabeledSection section;
      section.class_name = plan[d].class_name;
      std::vector<std::vector<std::string>> pages;
      if (plan[d].class_name == kOtherClass) {
        pages.push_back({rng.pick(kOtherLines)});
      } else {
        const ClassSchema* cls = find_class(classes, plan[d].class_name);
        const bool inject = rng.unit() < options.low_confidence_rate;
        DocumentText doc = render_document(*cls, plan[d].pages, inject, rng);
        pages = std::move(doc.pages);
        section.attributes = std::move(doc.attributes);
        for (const auto& a : doc.low) g.low_confidence.push_back(std::to_string(d) + "." + a);
      }
      for (const auto& lines : pages) {
        g.packet.pages.push_back(make_page(page_index, lines, id, options.image_refs, rng));
        section.pages.push_back(page_index++);
      }
      g.truth.sections.push_back(std::move(section));
    }
    self_check(g, classes);
    out.push_back(std::move(g));
  }
  return out;
}

CorpusFiles write_corpus(const std::vector<GeneratedPacket>& packets, const fs::path& out_dir) {
  CorpusFiles files;
  fs::create_directories(out_dir / "packets");
  fs::create_directories(out_dir / "ground_truth");
  auto write = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(path.string() + ": cannot write");
    out << text;
  };
  std::string manifest = "document_path,ground_truth_path\n";
  json index = json::array();
  for (const auto& g : packets) {
    const std::string name = g.packet.packet_id + ".json";
    const fs::path packet_path = out_dir / "packets" / name;
    const fs::path truth_path = out_dir / "ground_truth" / name;
    write(packet_path, packet_to_json(g.packet).dump(2) + "\n");
    write(truth_path, ground_truth_to_json(g.truth).dump(2) + "\n");
    files.packets.push_back(packet_path);
    files.truths.push_back(truth_path);
    manifest += "packets/" + name + ",ground_truth/" + name + "\n";
    index.push_back(json{{"packet_id", g.packet.packet_id},
                         {"pages", g.packet.pages.size()},
                         {"sections", g.truth.sections.size()},
                         {"low_confidence", g.low_confidence}});
  }
  files.manifest = out_dir / "manifest.csv";
  write(files.manifest, manifest);
  files.index = out_dir / "corpus_index.json";
  write(files.index, json{{"packets", index}}.dump(2) + "\n");
  return files;
}

CorpusFiles generate_corpus(const ClassConfig& classes, const CorpusOptions& options, const fs::path& out_dir) {
  return write_corpus(generate_packets(classes, options), out_dir);
}

}  // namespace docpipe
