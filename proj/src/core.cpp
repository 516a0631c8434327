#include "docpipe/core.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace docpipe {

namespace {

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw ValidationError(path + ": " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) invalid(path + "." + key, "missing");
  return *it;
}

// Absent and explicit null are treated alike.
const json* optional_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require(obj, key, path);
  if (!v.is_string()) invalid(path + "." + key, "expected a string");
  return v.get<std::string>();
}

double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) invalid(path, "expected a number");
  double d = v.get<double>();
  if (!std::isfinite(d)) invalid(path, "not finite");
  return d;
}

void require_object(const json& v, const std::string& path) {
  if (!v.is_object()) invalid(path.empty() ? "<root>" : path, "expected an object");
}

std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

AttributeSchema attribute_from_json(const json& doc, const std::string& path, bool nested);

ComparatorSpec comparator_from_json(const json* doc, ValueKind kind, const std::string& path) {
  ComparatorSpec spec;
  spec.kind = kind == ValueKind::Number ? ComparatorKind::Numeric : ComparatorKind::Exact;
  if (doc) {
    require_object(*doc, path);
    if (const json* k = optional_field(*doc, "kind")) {
      if (!k->is_string()) invalid(path + ".kind", "expected a string");
      try {
        spec.kind = parse_comparator_kind(k->get<std::string>());
      } catch (const ValidationError& e) {
        invalid(path + ".kind", e.what());
      }
    }
  }
  spec.threshold = spec.kind == ComparatorKind::BboxIou ? kDefaultIouThreshold : kDefaultFuzzyThreshold;
  if (!doc) return spec;
  if (const json* t = optional_field(*doc, "threshold")) spec.threshold = as_number(*t, path + ".threshold");
  if (const json* t = optional_field(*doc, "tolerance")) spec.tolerance = as_number(*t, path + ".tolerance");
  if (const json* f = optional_field(*doc, "normalize_case")) {
    if (!f->is_boolean()) invalid(path + ".normalize_case", "expected a boolean");
    spec.normalize_case = f->get<bool>();
  }
  if (const json* f = optional_field(*doc, "trim_whitespace")) {
    if (!f->is_boolean()) invalid(path + ".trim_whitespace", "expected a boolean");
    spec.trim_whitespace = f->get<bool>();
  }
  if (spec.threshold < 0.0 || spec.threshold > 1.0) invalid(path + ".threshold", "must lie in [0,1]");
  if (spec.tolerance < 0.0) invalid(path + ".tolerance", "must be nonnegative");
  return spec;
}

MockPattern mock_pattern_from_text(const std::string& text, const std::string& path) {
  static constexpr std::string_view kLowSuffix = "@low";
  MockPattern pattern{text, false};
  if (text.size() >= kLowSuffix.size() && text.compare(text.size() - kLowSuffix.size(), kLowSuffix.size(), kLowSuffix) == 0) {
    pattern.regex = text.substr(0, text.size() - kLowSuffix.size());
    pattern.low_confidence = true;
  }
  try {
    std::regex probe(pattern.regex);
    if (probe.mark_count() < 1) invalid(path, "pattern needs one capture group");
  } catch (const std::regex_error& e) {
    invalid(path, std::string("bad pattern: ") + e.what());
  }
  return pattern;
}

AttributeSchema attribute_from_json(const json& doc, const std::string& path, bool nested) {
  require_object(doc, path);
  AttributeSchema attr;
  attr.name = require_string(doc, "name", path);
  if (attr.name.empty()) invalid(path + ".name", "empty");
  try {
    attr.kind = parse_value_kind(require_string(doc, "value_kind", path));
  } catch (const ValidationError& e) {
    invalid(path + ".value_kind", e.what());
  }
  if (nested && attr.kind == ValueKind::RecordList) invalid(path + ".value_kind", "nested lists are not supported");
  if (const json* d = optional_field(doc, "description")) {
    if (!d->is_string()) invalid(path + ".description", "expected a string");
    attr.description = d->get<std::string>();
  }
  attr.comparator = comparator_from_json(optional_field(doc, "comparator"), attr.kind, path + ".comparator");
  if (const json* w = optional_field(doc, "weight")) {
    attr.weight = as_number(*w, path + ".weight");
    if (attr.weight < 0.0) invalid(path + ".weight", "negative weight");
  }
  if (const json* p = optional_field(doc, "mock_pattern")) {
    if (p->is_string()) {
      attr.mock_patterns.push_back(mock_pattern_from_text(p->get<std::string>(), path + ".mock_pattern"));
    } else if (p->is_array()) {
      for (std::size_t i = 0; i < p->size(); ++i) {
        const json& item = (*p)[i];
        if (!item.is_string()) invalid(index_path(path + ".mock_pattern", i), "expected a string");
        attr.mock_patterns.push_back(mock_pattern_from_text(item.get<std::string>(), index_path(path + ".mock_pattern", i)));
      }
    } else {
      invalid(path + ".mock_pattern", "expected a string or list of strings");
    }
  }
  if (const json* t = optional_field(doc, "mock_template")) {
    if (t->is_string()) {
      attr.mock_templates.push_back(t->get<std::string>());
    } else if (t->is_array()) {
      for (std::size_t i = 0; i < t->size(); ++i) {
        if (!(*t)[i].is_string()) invalid(index_path(path + ".mock_template", i), "expected a string");
        attr.mock_templates.push_back((*t)[i].get<std::string>());
      }
    } else {
      invalid(path + ".mock_template", "expected a string or list of strings");
    }
    if (attr.mock_templates.size() > std::max<std::size_t>(attr.mock_patterns.size(), 1))
      invalid(path + ".mock_template", "more templates than mock patterns");
  }
  if (const json* ex = optional_field(doc, "few_shot_examples")) {
    if (!ex->is_array()) invalid(path + ".few_shot_examples", "expected a list");
    for (std::size_t i = 0; i < ex->size(); ++i) {
      const std::string ep = index_path(path + ".few_shot_examples", i);
      require_object((*ex)[i], ep);
      FewShotExample example;
      example.input = require_string((*ex)[i], "input", ep);
      example.expected = require((*ex)[i], "expected", ep);
      attr.few_shot_examples.push_back(std::move(example));
    }
  }
  if (attr.kind == ValueKind::RecordList) {
    const json& fields = require(doc, "fields", path);
    if (!fields.is_array() || fields.empty()) invalid(path + ".fields", "list-of-records needs at least one field");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < fields.size(); ++i) {
      AttributeSchema field = attribute_from_json(fields[i], index_path(path + ".fields", i), true);
      if (!seen.insert(field.name).second) invalid(index_path(path + ".fields", i) + ".name", "duplicate field '" + field.name + "'");
      attr.fields.push_back(std::move(field));
    }
  }
  return attr;
}

json comparator_to_json(const ComparatorSpec& spec) {
  return json{{"kind", to_string(spec.kind)},
              {"threshold", spec.threshold},
              {"tolerance", spec.tolerance},
              {"normalize_case", spec.normalize_case},
              {"trim_whitespace", spec.trim_whitespace}};
}

json attribute_to_json(const AttributeSchema& attr) {
  json out{{"name", attr.name},
           {"value_kind", to_string(attr.kind)},
           {"comparator", comparator_to_json(attr.comparator)},
           {"weight", attr.weight}};
  if (!attr.description.empty()) out["description"] = attr.description;
  if (!attr.mock_patterns.empty()) {
    json patterns = json::array();
    for (const auto& p : attr.mock_patterns) patterns.push_back(p.low_confidence ? p.regex + "@low" : p.regex);
    out["mock_pattern"] = std::move(patterns);
  }
  if (!attr.mock_templates.empty()) out["mock_template"] = attr.mock_templates;
  if (!attr.few_shot_examples.empty()) {
    json examples = json::array();
    for (const auto& e : attr.few_shot_examples) examples.push_back({{"input", e.input}, {"expected", e.expected}});
    out["few_shot_examples"] = std::move(examples);
  }
  if (!attr.fields.empty()) {
    json fields = json::array();
    for (const auto& f : attr.fields) fields.push_back(attribute_to_json(f));
    out["fields"] = std::move(fields);
  }
  return out;
}

}  // namespace

const AttributeSchema* ClassSchema::find_attribute(std::string_view name) const {
  for (const auto& a : attributes)
    if (a.name == name) return &a;
  return nullptr;
}

const ClassSchema* find_class(const ClassConfig& classes, std::string_view name) {
  for (const auto& c : classes)
    if (c.class_name == name) return &c;
  return nullptr;
}

std::string_view to_string(ValueKind kind) {
  switch (kind) {
    case ValueKind::String: return "string";
    case ValueKind::Number: return "number";
    case ValueKind::Date: return "date";
    case ValueKind::RecordList: return "list";
  }
  return "string";
}

std::string_view to_string(ComparatorKind kind) {
  switch (kind) {
    case ComparatorKind::Exact: return "exact";
    case ComparatorKind::Fuzzy: return "fuzzy";
    case ComparatorKind::Numeric: return "numeric";
    case ComparatorKind::BboxIou: return "bbox-iou";
  }
  return "exact";
}

ValueKind parse_value_kind(std::string_view text) {
  if (text == "string") return ValueKind::String;
  if (text == "number") return ValueKind::Number;
  if (text == "date") return ValueKind::Date;
  if (text == "list" || text == "list-of-records") return ValueKind::RecordList;
  throw ValidationError("unknown value kind '" + std::string(text) + "'");
}

ComparatorKind parse_comparator_kind(std::string_view text) {
  if (text == "exact") return ComparatorKind::Exact;
  if (text == "fuzzy") return ComparatorKind::Fuzzy;
  if (text == "numeric") return ComparatorKind::Numeric;
  if (text == "bbox-iou" || text == "iou") return ComparatorKind::BboxIou;
  throw ValidationError("unknown comparator kind '" + std::string(text) + "'");
}

void validate_bbox(const BoundingBox& b, const std::string& path) {
  for (double v : {b.x0, b.y0, b.x1, b.y1})
    if (!(v >= 0.0 && v <= 1.0)) invalid(path, "coordinates must lie in [0,1]");
  if (b.x0 > b.x1 || b.y0 > b.y1) invalid(path, "expected x0 <= x1 and y0 <= y1");
}

json bbox_to_json(const BoundingBox& box) { return json::array({box.x0, box.y0, box.x1, box.y1}); }

BoundingBox bbox_from_json(const json& value, const std::string& path) {
  if (!value.is_array() || value.size() != 4) invalid(path, "expected [x0,y0,x1,y1]");
  BoundingBox box{as_number(value[0], path + "[0]"), as_number(value[1], path + "[1]"),
                  as_number(value[2], path + "[2]"), as_number(value[3], path + "[3]")};
  validate_bbox(box, path);
  return box;
}

DocumentPacket packet_from_json(const json& doc, const std::string& source_path) {
  require_object(doc, "");
  DocumentPacket packet;
  packet.source_path = source_path;
  packet.packet_id = require_string(doc, "packet_id", "packet");
  if (packet.packet_id.empty()) invalid("packet.packet_id", "empty");
  const json& pages = require(doc, "pages", "packet");
  if (!pages.is_array() || pages.empty()) invalid("packet.pages", "at least one page required");
  for (std::size_t i = 0; i < pages.size(); ++i) {
    const std::string pp = index_path("pages", i);
    const json& pj = pages[i];
    require_object(pj, pp);
    Page page;
    const json& idx = require(pj, "index", pp);
    if (!idx.is_number_integer()) invalid(pp + ".index", "expected an integer");
    page.index = idx.get<int>();
    if (const json* img = optional_field(pj, "image_ref")) {
      if (!img->is_string()) invalid(pp + ".image_ref", "expected a string");
      page.image_ref = img->get<std::string>();
    }
    if (const json* lines = optional_field(pj, "lines")) {
      if (!lines->is_array()) invalid(pp + ".lines", "expected a list");
      for (std::size_t j = 0; j < lines->size(); ++j) {
        const std::string lp = index_path(pp + ".lines", j);
        const json& lj = (*lines)[j];
        require_object(lj, lp);
        TextLine line;
        line.text = require_string(lj, "text", lp);
        line.confidence = as_number(require(lj, "confidence", lp), lp + ".confidence");
        if (line.confidence < 0.0 || line.confidence > 100.0) invalid(lp + ".confidence", "must lie in [0,100]");
        line.bbox = bbox_from_json(require(lj, "bbox", lp), lp + ".bbox");
        page.lines.push_back(std::move(line));
      }
    }
    packet.pages.push_back(std::move(page));
  }
  std::stable_sort(packet.pages.begin(), packet.pages.end(),
                   [](const Page& a, const Page& b) { return a.index < b.index; });
  for (std::size_t i = 0; i < packet.pages.size(); ++i) {
    const int idx = packet.pages[i].index;
    if (idx < 0) invalid("pages", "negative page index " + std::to_string(idx));
    if (i > 0 && idx == packet.pages[i - 1].index) invalid("pages", "duplicate page index " + std::to_string(idx));
    if (idx != static_cast<int>(i)) invalid("pages", "page index gap: missing index " + std::to_string(i));
  }
  return packet;
}

json packet_to_json(const DocumentPacket& packet) {
  json pages = json::array();
  for (const auto& page : packet.pages) {
    json lines = json::array();
    for (const auto& line : page.lines)
      lines.push_back({{"text", line.text}, {"confidence", line.confidence}, {"bbox", bbox_to_json(line.bbox)}});
    json pj{{"index", page.index}, {"lines", std::move(lines)}};
    if (page.image_ref) pj["image_ref"] = *page.image_ref;
    pages.push_back(std::move(pj));
  }
  return json{{"packet_id", packet.packet_id}, {"pages", std::move(pages)}};
}

ClassConfig class_config_from_json(const json& doc) {
  require_object(doc, "");
  const json& classes = require(doc, "classes", "config");
  if (!classes.is_array() || classes.empty()) invalid("classes", "at least one class required");
  ClassConfig out;
  std::set<std::string> names;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const std::string cp = index_path("classes", i);
    const json& cj = classes[i];
    require_object(cj, cp);
    ClassSchema cls;
    cls.class_name = require_string(cj, "class_name", cp);
    if (cls.class_name.empty()) invalid(cp + ".class_name", "empty");
    if (!names.insert(cls.class_name).second) invalid(cp + ".class_name", "duplicate class '" + cls.class_name + "'");
    if (const json* d = optional_field(cj, "description")) {
      if (!d->is_string()) invalid(cp + ".description", "expected a string");
      cls.description = d->get<std::string>();
    }
    if (const json* kw = optional_field(cj, "keywords")) {
      if (!kw->is_array()) invalid(cp + ".keywords", "expected a list");
      for (std::size_t k = 0; k < kw->size(); ++k) {
        if (!(*kw)[k].is_string()) invalid(index_path(cp + ".keywords", k), "expected a string");
        cls.keywords.push_back((*kw)[k].get<std::string>());
      }
    }
    if (const json* attrs = optional_field(cj, "attributes")) {
      if (!attrs->is_array()) invalid(cp + ".attributes", "expected a list");
      std::set<std::string> attr_names;
      for (std::size_t a = 0; a < attrs->size(); ++a) {
        const std::string ap = index_path(cp + ".attributes", a);
        AttributeSchema attr = attribute_from_json((*attrs)[a], ap, false);
        if (!attr_names.insert(attr.name).second) invalid(ap + ".name", "duplicate attribute '" + attr.name + "'");
        cls.attributes.push_back(std::move(attr));
      }
    }
    if (cls.class_name == kOtherClass && !cls.attributes.empty())
      invalid(cp + ".attributes", "reserved class 'other' cannot have attributes");
    out.push_back(std::move(cls));
  }
  return out;
}

json class_config_to_json(const ClassConfig& classes) {
  json arr = json::array();
  for (const auto& c : classes) {
    json attrs = json::array();
    for (const auto& a : c.attributes) attrs.push_back(attribute_to_json(a));
    arr.push_back({{"class_name", c.class_name},
                   {"description", c.description},
                   {"keywords", c.keywords},
                   {"attributes", std::move(attrs)}});
  }
  return json{{"classes", std::move(arr)}};
}

GroundTruth ground_truth_from_json(const json& doc, const ClassConfig* classes) {
  require_object(doc, "");
  GroundTruth truth;
  truth.packet_id = require_string(doc, "packet_id", "ground_truth");
  if (truth.packet_id.empty()) invalid("ground_truth.packet_id", "empty");
  const json& sections = require(doc, "sections", "ground_truth");
  if (!sections.is_array() || sections.empty()) invalid("sections", "a baseline must label every page");
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const std::string sp = index_path("sections", i);
    const json& sj = sections[i];
    require_object(sj, sp);
    LabeledSection section;
    section.class_name = require_string(sj, "class_name", sp);
    if (classes && section.class_name != kOtherClass && !find_class(*classes, section.class_name))
      invalid(sp + ".class_name", "unknown class '" + section.class_name + "'");
    const json& pages = require(sj, "pages", sp);
    if (!pages.is_array() || pages.empty()) invalid(sp + ".pages", "expected a nonempty list of page indices");
    for (std::size_t p = 0; p < pages.size(); ++p) {
      if (!pages[p].is_number_integer() || pages[p].get<int>() < 0)
        invalid(index_path(sp + ".pages", p), "expected a nonnegative integer");
      section.pages.push_back(pages[p].get<int>());
    }
    if (const json* attrs = optional_field(sj, "attributes")) {
      if (!attrs->is_object()) invalid(sp + ".attributes", "expected an object");
      section.attributes = *attrs;
    }
    truth.sections.push_back(std::move(section));
  }
  std::vector<int> all;
  for (const auto& s : truth.sections) all.insert(all.end(), s.pages.begin(), s.pages.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i > 0 && all[i] == all[i - 1])
      invalid("sections", "page " + std::to_string(all[i]) + " is labeled more than once");
    if (all[i] != static_cast<int>(i)) invalid("sections", "page " + std::to_string(i) + " is not labeled");
  }
  return truth;
}

json ground_truth_to_json(const GroundTruth& truth) {
  json sections = json::array();
  for (const auto& s : truth.sections)
    sections.push_back({{"class_name", s.class_name}, {"pages", s.pages}, {"attributes", s.attributes}});
  return json{{"packet_id", truth.packet_id}, {"sections", std::move(sections)}};
}

json parse_document(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_document(const std::filesystem::path& path) {
  return parse_document(read_text_file(path), path.string());
}

DocumentPacket load_packet(const std::filesystem::path& path) {
  return packet_from_json(read_document(path), path.string());
}

ClassConfig load_class_config(const std::filesystem::path& path) {
  return class_config_from_json(read_document(path));
}

GroundTruth load_ground_truth(const std::filesystem::path& path, const ClassConfig* classes) {
  return ground_truth_from_json(read_document(path), classes);
}

std::optional<double> parse_number(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (c == ',' || c == '$' || std::isspace(c)) continue;
    // UTF-8 euro, pound, yen
    if (c == 0xE2 && text.substr(i, 3) == "\xE2\x82\xAC") { i += 2; continue; }
    if (c == 0xC2 && (text.substr(i, 2) == "\xC2\xA3" || text.substr(i, 2) == "\xC2\xA5")) { i += 1; continue; }
    cleaned.push_back(static_cast<char>(c));
  }
  if (cleaned.empty()) return std::nullopt;
  const char* first = cleaned.data();
  const char* last = first + cleaned.size();
  if (*first == '+') ++first;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xF];
    value >>= 4;
  }
  return out;
}

}  // namespace docpipe
