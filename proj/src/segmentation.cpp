#include "docpipe/segmentation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <mutex>
#include <thread>

namespace docpipe {

BioLabel::BioLabel(BioTag tag, std::string class_name) : tag_(tag), class_name_(std::move(class_name)) {
  if (tag_ == BioTag::O && !class_name_.empty()) throw ValidationError("label: O carries no class");
  if (tag_ != BioTag::O && class_name_.empty()) throw ValidationError("label: B/I needs a class");
}

std::string BioLabel::str() const {
  switch (tag_) {
    case BioTag::B: return "B-" + class_name_;
    case BioTag::I: return "I-" + class_name_;
    case BioTag::O: return "O";
  }
  return "O";
}

BioLabel BioLabel::parse(std::string_view text) {
  if (text == "O") return outside();
  if (text.size() > 2 && text[1] == '-') {
    if (text[0] == 'B') return begin(std::string(text.substr(2)));
    if (text[0] == 'I') return inside(std::string(text.substr(2)));
  }
  throw ParseError("label: cannot parse '" + std::string(text) + "'");
}

json sections_to_json(const std::vector<Section>& sections) {
  json out = json::array();
  for (const auto& s : sections)
    out.push_back({{"section_id", s.section_id}, {"class_name", s.class_name}, {"pages", s.page_indices}});
  return out;
}

std::vector<Section> sections_from_json(const json& doc) {
  if (!doc.is_array()) throw ParseError("sections: expected a list");
  std::vector<Section> out;
  for (const auto& s : doc) {
    if (!s.is_object() || !s.contains("section_id") || !s.contains("class_name") || !s.contains("pages"))
      throw ParseError("sections: malformed entry");
    out.push_back({s.at("section_id").get<std::string>(), s.at("class_name").get<std::string>(),
                   s.at("pages").get<std::vector<int>>()});
  }
  return out;
}

namespace {

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return 0;
  std::size_t count = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + needle.size()))
    ++count;
  return count;
}

}  // namespace

std::string MockClassifier::predict(std::string_view text, std::span<const ClassSchema> classes) {
  const std::string haystack = lower(text);
  std::size_t best_score = 0;
  std::string best;
  for (const auto& cls : classes) {
    std::size_t score = 0;
    for (const auto& kw : cls.keywords) score += count_occurrences(haystack, lower(kw));
    if (score > best_score) {
      best_score = score;
      best = cls.class_name;
    }
  }
  return best;
}

BioLabel MockClassifier::classify(const ClassifyRequest& request) {
  std::string current = predict(request.page_text, request.classes);
  if (current.empty()) return BioLabel::outside();
  if (request.previous_page_text && predict(*request.previous_page_text, request.classes) == current)
    return BioLabel::inside(std::move(current));
  return BioLabel::begin(std::move(current));
}

std::string page_text(const Page& page) {
  std::string text;
  for (const auto& line : page.lines) {
    if (!text.empty()) text += '\n';
    text += line.text;
  }
  return text;
}

PageClassification classify_pages(const DocumentPacket& packet, const ClassConfig& classes,
                                  ClassifierBackend& backend, int max_concurrency) {
  if (classes.empty()) throw ValidationError("classes: at least one class required");
  const std::size_t n = packet.pages.size();
  std::vector<std::string> texts(n);
  for (std::size_t i = 0; i < n; ++i) texts[i] = page_text(packet.pages[i]);

  std::vector<BioLabel> raw(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      ClassifyRequest request{texts[i], packet.pages[i].image_ref,
                              i > 0 ? std::optional<std::string>(texts[i - 1]) : std::nullopt, classes};
      try {
        raw[i] = backend.classify(request);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, max_concurrency)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  PageClassification out;
  out.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    BioLabel label = std::move(raw[i]);
    if (label.tag() != BioTag::O && !find_class(classes, label.class_name())) {
      out.warnings.push_back("page " + std::to_string(i) + ": backend returned unconfigured class '" +
                             label.class_name() + "', coerced to O");
      label = BioLabel::outside();
    }
    out.labels.push_back(std::move(label));
  }
  return out;
}

std::vector<Section> decode_bio(std::span<const BioLabel> labels) {
  std::vector<Section> sections;
  bool open = false;  // last section accepts I continuation
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const BioLabel& label = labels[i];
    const int page = static_cast<int>(i);
    if (label.tag() == BioTag::O) {
      sections.push_back({"", std::string(kOtherClass), {page}});
      open = false;
      continue;
    }
    // Leading or class-mismatched I is repaired to B.
    if (label.tag() == BioTag::I && open && sections.back().class_name == label.class_name()) {
      sections.back().page_indices.push_back(page);
      continue;
    }
    sections.push_back({"", label.class_name(), {page}});
    open = true;
  }
  for (std::size_t i = 0; i < sections.size(); ++i) sections[i].section_id = "s" + std::to_string(i);
  return sections;
}

std::vector<BioLabel> encode_bio(std::span<const Section> sections) {
  std::vector<BioLabel> labels;
  for (const auto& s : sections) {
    for (std::size_t k = 0; k < s.page_indices.size(); ++k) {
      if (s.class_name == kOtherClass)
        labels.push_back(BioLabel::outside());
      else
        labels.push_back(k == 0 ? BioLabel::begin(s.class_name) : BioLabel::inside(s.class_name));
    }
  }
  return labels;
}

std::vector<Section> sectionize(const DocumentPacket& packet, const ClassConfig& classes,
                                ClassifierBackend& backend, int max_concurrency) {
  const PageClassification classification = classify_pages(packet, classes, backend, max_concurrency);
  return decode_bio(classification.labels);
}

}  // namespace docpipe
