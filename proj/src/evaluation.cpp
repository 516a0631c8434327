#include "docpipe/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>

namespace docpipe {

// ---------------------------------------------------------------------------
// Comparators

namespace {

std::optional<std::u32string> decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    int len = 0;
    char32_t cp = 0;
    if (c < 0x80) { cp = c; len = 1; }
    else if ((c & 0xE0) == 0xC0) { cp = c & 0x1F; len = 2; }
    else if ((c & 0xF0) == 0xE0) { cp = c & 0x0F; len = 3; }
    else if ((c & 0xF8) == 0xF0) { cp = c & 0x07; len = 4; }
    else return std::nullopt;
    if (i + static_cast<std::size_t>(len) > s.size()) return std::nullopt;
    for (int k = 1; k < len; ++k) {
      const auto cc = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
      if ((cc & 0xC0) != 0x80) return std::nullopt;
      cp = (cp << 6) | (cc & 0x3F);
    }
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

template <typename Seq>
std::size_t levenshtein(const Seq& a, const Seq& b) {
  if (a.size() < b.size()) return levenshtein(b, a);
  std::vector<std::size_t> row(b.size() + 1);
  std::iota(row.begin(), row.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::optional<double> numeric_value(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) return parse_number(v.get<std::string>());
  return std::nullopt;
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number()) return v.dump();
  throw KindMismatch("expected a scalar value, got " + std::string(v.type_name()));
}

}  // namespace

std::string normalize_text(std::string_view text, bool lower_case, bool trim) {
  if (trim) {
    const auto first = text.find_first_not_of(" \t\r\n\f\v");
    if (first == std::string_view::npos) return {};
    const auto last = text.find_last_not_of(" \t\r\n\f\v");
    text = text.substr(first, last - first + 1);
  }
  std::string out(text);
  if (lower_case)
    for (auto& ch : out)
      if (static_cast<unsigned char>(ch) < 0x80) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  auto ua = decode_utf8(a);
  auto ub = decode_utf8(b);
  if (ua && ub) return levenshtein(*ua, *ub);
  return levenshtein(a, b);
}

double similarity(std::string_view a, std::string_view b, bool normalize_case, bool trim) {
  const std::string na = normalize_text(a, normalize_case, trim);
  const std::string nb = normalize_text(b, normalize_case, trim);
  const auto ua = decode_utf8(na);
  const auto ub = decode_utf8(nb);
  std::size_t distance = 0, longest = 0;
  if (ua && ub) {
    distance = levenshtein(*ua, *ub);
    longest = std::max(ua->size(), ub->size());
  } else {
    distance = levenshtein(std::string_view(na), std::string_view(nb));
    longest = std::max(na.size(), nb.size());
  }
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(distance) / static_cast<double>(longest);
}

double bbox_iou(const BoundingBox& a, const BoundingBox& b) {
  const double iw = std::max(0.0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const double ih = std::max(0.0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const double inter = iw * ih;
  const double area_a = (a.x1 - a.x0) * (a.y1 - a.y0);
  const double area_b = (b.x1 - b.x0) * (b.y1 - b.y0);
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

MatchOutcome compare_value(const json& expected, const json& predicted, const ComparatorSpec& spec) {
  MatchOutcome out;
  switch (spec.kind) {
    case ComparatorKind::Exact: {
      const auto ne = numeric_value(expected);
      const auto np = numeric_value(predicted);
      if ((expected.is_number() || predicted.is_number()) && ne && np) {
        out.matched = *ne == *np;
      } else {
        out.matched = normalize_text(scalar_text(expected), spec.normalize_case, spec.trim_whitespace) ==
                      normalize_text(scalar_text(predicted), spec.normalize_case, spec.trim_whitespace);
      }
      out.score = out.matched ? 1.0 : 0.0;
      out.detail = out.matched ? "exact match" : "values differ";
      return out;
    }
    case ComparatorKind::Fuzzy: {
      out.score = similarity(scalar_text(expected), scalar_text(predicted), spec.normalize_case, spec.trim_whitespace);
      out.matched = out.score >= spec.threshold;
      std::ostringstream os;
      os << "similarity " << out.score << (out.matched ? " >= " : " < ") << spec.threshold;
      out.detail = os.str();
      return out;
    }
    case ComparatorKind::Numeric: {
      const auto e = numeric_value(expected);
      const auto p = numeric_value(predicted);
      if (!e || !p) throw KindMismatch("numeric comparator needs numbers");
      const double diff = std::fabs(*e - *p);
      const double scale = std::max({std::fabs(*e), std::fabs(*p), 1.0});
      out.matched = diff <= spec.tolerance + 1e-12 * scale;
      const double denom = std::max(std::fabs(*e), std::fabs(*p));
      out.score = out.matched ? 1.0 : (denom > 0.0 ? std::max(0.0, 1.0 - diff / denom) : 0.0);
      std::ostringstream os;
      os << "|difference| " << diff << (out.matched ? " within " : " exceeds ") << spec.tolerance;
      out.detail = os.str();
      return out;
    }
    case ComparatorKind::BboxIou: {
      BoundingBox a, b;
      try {
        a = bbox_from_json(expected, "expected");
        b = bbox_from_json(predicted, "predicted");
      } catch (const ValidationError& err) {
        throw KindMismatch(std::string("bbox comparator: ") + err.what());
      }
      out.score = bbox_iou(a, b);
      out.matched = out.score >= spec.threshold;
      std::ostringstream os;
      os << "IoU " << out.score << (out.matched ? " >= " : " < ") << spec.threshold;
      out.detail = os.str();
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Assignment

CostMatrix::CostMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ValidationError("cost matrix: ragged rows");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

namespace {

// Shortest augmenting path with potentials; requires rows <= cols. Returns col assigned to each row.
std::vector<std::size_t> solve_rows_le_cols(const CostMatrix& a) {
  const std::size_t n = a.rows();
  const std::size_t m = a.cols();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_to_col(n, 0);
  for (std::size_t j = 1; j <= m; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

// Optimal cost of assigning min(|rows|, |cols|) pairs within a sub-grid.
double optimal_cost(const CostMatrix& cost, const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  if (rows.empty() || cols.empty()) return 0.0;
  const bool transpose = rows.size() > cols.size();
  const auto& r = transpose ? cols : rows;
  const auto& c = transpose ? rows : cols;
  CostMatrix sub(r.size(), c.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < c.size(); ++j)
      sub(i, j) = transpose ? cost(c[j], r[i]) : cost(r[i], c[j]);
  const auto assign = solve_rows_le_cols(sub);
  double total = 0.0;
  for (std::size_t i = 0; i < assign.size(); ++i) total += sub(i, assign[i]);
  return total;
}

}  // namespace

Assignment hungarian_assign(const CostMatrix& cost) {
  Assignment result;
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  if (n == 0 || m == 0) return result;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (!std::isfinite(cost(i, j)) || cost(i, j) < 0.0)
        throw ValidationError("cost matrix: entries must be finite and nonnegative");

  std::vector<std::size_t> all_rows(n), all_cols(m);
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});
  std::iota(all_cols.begin(), all_cols.end(), std::size_t{0});
  const double best = optimal_cost(cost, all_rows, all_cols);
  const double eps = 1e-9 * std::max(1.0, best);
  const std::size_t size = std::min(n, m);

  // Greedy lexicographic refinement: commit the smallest (row, col) that still admits an optimum.
  std::vector<bool> col_used(m, false);
  double committed = 0.0;
  std::size_t next_row = 0;
  while (result.pairs.size() < size) {
    bool placed = false;
    for (std::size_t i = next_row; i < n && !placed; ++i) {
      for (std::size_t j = 0; j < m && !placed; ++j) {
        if (col_used[j]) continue;
        std::vector<std::size_t> rows, cols;
        for (std::size_t r = i + 1; r < n; ++r) rows.push_back(r);
        for (std::size_t c = 0; c < m; ++c)
          if (!col_used[c] && c != j) cols.push_back(c);
        const std::size_t needed = size - result.pairs.size() - 1;
        if (std::min(rows.size(), cols.size()) != needed) continue;
        if (committed + cost(i, j) + optimal_cost(cost, rows, cols) <= best + eps) {
          result.pairs.emplace_back(i, j);
          committed += cost(i, j);
          col_used[j] = true;
          next_row = i + 1;
          placed = true;
        }
      }
    }
    if (!placed) throw Error("hungarian_assign: refinement failed to place a pair");
  }
  result.total_cost = 0.0;
  for (const auto& [r, c] : result.pairs) result.total_cost += cost(r, c);
  return result;
}

// ---------------------------------------------------------------------------
// Counting

Counts& Counts::operator+=(const Counts& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  weight = other.weight;
  return *this;
}

void merge_into(FieldCounts& into, const FieldCounts& from) {
  for (const auto& [name, counts] : from) into[name] += counts;
}

namespace {

bool absent(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null();
}

// Scalar counting rule shared by top-level attributes and list subfields.
void count_scalar(FieldCounts& counts, const std::string& key, const json& expected, const json& predicted,
                  const std::string& name, const ComparatorSpec& spec, double weight) {
  const bool has_e = !absent(expected, name);
  const bool has_p = !absent(predicted, name);
  Counts& c = counts[key];
  c.weight = weight;
  if (!has_e && !has_p) return;
  if (!has_e) {
    c.fp += weight;
  } else if (!has_p) {
    c.fn += weight;
  } else if (compare_value(expected.at(name), predicted.at(name), spec).matched) {
    c.tp += weight;
  } else {
    c.fp += weight;
    c.fn += weight;
  }
}

void require_records(const json& list, const char* side) {
  if (!list.is_array()) throw KindMismatch(std::string(side) + " list value is not a list");
  for (const auto& r : list)
    if (!r.is_object()) throw KindMismatch(std::string(side) + " list item is not a record");
}

}  // namespace

ListMatch match_lists(const json& expected, const json& predicted, std::span<const AttributeSchema> item_schema,
                      double list_weight, const std::string& prefix) {
  require_records(expected, "expected");
  require_records(predicted, "predicted");
  ListMatch out;
  const std::size_t n = expected.size();
  const std::size_t m = predicted.size();
  auto key = [&](const AttributeSchema& f) { return prefix.empty() ? f.name : prefix + "." + f.name; };
  for (const auto& f : item_schema) out.counts[key(f)].weight = list_weight * f.weight;

  // Item score: weighted fraction of matched subfields among those present on either side.
  auto item_score = [&](const json& e, const json& p) {
    double total = 0.0, matched = 0.0;
    for (const auto& f : item_schema) {
      const bool has_e = !absent(e, f.name);
      const bool has_p = !absent(p, f.name);
      if (!has_e && !has_p) continue;
      total += f.weight;
      if (has_e && has_p && compare_value(e.at(f.name), p.at(f.name), f.comparator).matched) matched += f.weight;
    }
    return total > 0.0 ? matched / total : 0.0;
  };

  CostMatrix cost(n, m);
  std::vector<double> scores(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      scores[i * m + j] = item_score(expected[i], predicted[j]);
      cost(i, j) = 1.0 - scores[i * m + j];
    }
  const Assignment assignment = hungarian_assign(cost);

  std::vector<bool> e_paired(n, false), p_paired(m, false);
  for (const auto& [i, j] : assignment.pairs) {
    const double score = scores[i * m + j];
    if (score <= 0.0) continue;  // structureless pairing is dissolved
    e_paired[i] = p_paired[j] = true;
    out.pairs.push_back({i, j, score});
    for (const auto& f : item_schema)
      count_scalar(out.counts, key(f), expected[i], predicted[j], f.name, f.comparator, list_weight * f.weight);
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (e_paired[i]) continue;
    for (const auto& f : item_schema)
      if (!absent(expected[i], f.name)) out.counts[key(f)].fn += list_weight * f.weight;
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (p_paired[j]) continue;
    for (const auto& f : item_schema)
      if (!absent(predicted[j], f.name)) out.counts[key(f)].fp += list_weight * f.weight;
  }
  return out;
}

FieldCounts evaluate_document(const json& expected, const json& predicted, const ClassSchema& schema) {
  const json empty = json::object();
  const json& e = expected.is_null() ? empty : expected;
  const json& p = predicted.is_null() ? empty : predicted;
  if (!e.is_object() || !p.is_object()) throw KindMismatch("attribute maps must be objects");
  FieldCounts counts;
  for (const auto& attr : schema.attributes) {
    if (attr.kind != ValueKind::RecordList) {
      count_scalar(counts, attr.name, e, p, attr.name, attr.comparator, attr.weight);
      continue;
    }
    const json empty_list = json::array();
    ListMatch lm = match_lists(absent(e, attr.name) ? empty_list : e.at(attr.name),
                               absent(p, attr.name) ? empty_list : p.at(attr.name), attr.fields, attr.weight, attr.name);
    merge_into(counts, lm.counts);
  }
  return counts;
}

Prf prf(double tp, double fp, double fn) {
  Prf out;
  out.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
  out.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
  out.f1 = out.precision + out.recall > 0.0 ? 2.0 * out.precision * out.recall / (out.precision + out.recall) : 0.0;
  return out;
}

EvaluationReport aggregate(std::span<const FieldCounts> documents, std::size_t failed_count) {
  EvaluationReport report;
  report.documents = documents.size();
  report.failed = failed_count;
  double tp = 0.0, fp = 0.0, fn = 0.0;
  double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0;
  std::size_t countable = 0;
  for (const auto& doc : documents) {
    double dtp = 0.0, dfp = 0.0, dfn = 0.0;
    for (const auto& [name, c] : doc) {
      dtp += c.tp;
      dfp += c.fp;
      dfn += c.fn;
      report.per_field[name].counts += c;
    }
    tp += dtp;
    fp += dfp;
    fn += dfn;
    if (dtp + dfp + dfn > 0.0) {
      const Prf d = prf(dtp, dfp, dfn);
      macro_p += d.precision;
      macro_r += d.recall;
      macro_f += d.f1;
      ++countable;
    }
  }
  report.micro = prf(tp, fp, fn);
  if (countable > 0) {
    const double k = static_cast<double>(countable);
    report.macro = {macro_p / k, macro_r / k, macro_f / k};
  }
  for (auto& [name, field] : report.per_field) field.metrics = prf(field.counts.tp, field.counts.fp, field.counts.fn);
  report.extraction_score = report.micro.f1;
  return report;
}

namespace {

json prf_json(const Prf& m) { return json{{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}}; }

}  // namespace

json to_json(const EvaluationReport& report) {
  json fields = json::object();
  for (const auto& [name, f] : report.per_field)
    fields[name] = {{"tp", f.counts.tp}, {"fp", f.counts.fp}, {"fn", f.counts.fn}, {"weight", f.counts.weight},
                    {"precision", f.metrics.precision}, {"recall", f.metrics.recall}, {"f1", f.metrics.f1}};
  return json{{"micro", prf_json(report.micro)},
              {"macro", prf_json(report.macro)},
              {"extraction_score", report.extraction_score},
              {"documents", report.documents},
              {"failed", report.failed},
              {"per_field", std::move(fields)}};
}

std::string render_table(const EvaluationReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "Extraction score (weighted micro F1): " << report.extraction_score << "\n";
  os << "Micro  P " << report.micro.precision << "  R " << report.micro.recall << "  F1 " << report.micro.f1 << "\n";
  os << "Macro  P " << report.macro.precision << "  R " << report.macro.recall << "  F1 " << report.macro.f1 << "\n";
  os << "Documents " << report.documents << "  Failed " << report.failed << "\n\n";
  os << std::left << std::setw(32) << "Field" << std::right << std::setw(9) << "TP" << std::setw(9) << "FP"
     << std::setw(9) << "FN" << std::setw(9) << "P" << std::setw(9) << "R" << std::setw(9) << "F1" << "\n";
  for (const auto& [name, f] : report.per_field) {
    os << std::left << std::setw(32) << name << std::right << std::setprecision(2) << std::setw(9) << f.counts.tp
       << std::setw(9) << f.counts.fp << std::setw(9) << f.counts.fn << std::setprecision(4) << std::setw(9)
       << f.metrics.precision << std::setw(9) << f.metrics.recall << std::setw(9) << f.metrics.f1 << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Splitting

std::vector<LabeledSection> to_labeled(std::span<const Section> sections) {
  std::vector<LabeledSection> out;
  out.reserve(sections.size());
  for (const auto& s : sections) out.push_back({s.class_name, s.page_indices, json::object()});
  return out;
}

namespace {

std::vector<std::string> page_classes(std::span<const LabeledSection> sections, std::size_t page_count,
                                      const char* side) {
  std::vector<std::string> classes(page_count);
  std::vector<bool> seen(page_count, false);
  for (const auto& s : sections) {
    for (int p : s.pages) {
      if (p < 0 || static_cast<std::size_t>(p) >= page_count)
        throw PartitionError(std::string(side) + ": page " + std::to_string(p) + " out of range");
      if (seen[static_cast<std::size_t>(p)])
        throw PartitionError(std::string(side) + ": page " + std::to_string(p) + " assigned twice");
      seen[static_cast<std::size_t>(p)] = true;
      classes[static_cast<std::size_t>(p)] = s.class_name;
    }
  }
  for (std::size_t p = 0; p < page_count; ++p)
    if (!seen[p]) throw PartitionError(std::string(side) + ": page " + std::to_string(p) + " not covered");
  return classes;
}

template <typename Same>
std::size_t greedy_matches(std::span<const LabeledSection> truth, std::span<const LabeledSection> predicted, Same same) {
  std::vector<bool> used(truth.size(), false);
  std::size_t matches = 0;
  for (const auto& p : predicted) {
    for (std::size_t g = 0; g < truth.size(); ++g) {
      if (used[g] || truth[g].class_name != p.class_name || !same(truth[g].pages, p.pages)) continue;
      used[g] = true;
      ++matches;
      break;
    }
  }
  return matches;
}

}  // namespace

PacketSplit split_metrics(std::span<const LabeledSection> truth, std::span<const LabeledSection> predicted,
                          std::size_t page_count, std::string packet_id) {
  const auto gt_classes = page_classes(truth, page_count, "ground truth");
  const auto pred_classes = page_classes(predicted, page_count, "prediction");
  PacketSplit out;
  out.packet_id = std::move(packet_id);
  out.pages = page_count;
  out.gt_sections = truth.size();
  for (std::size_t p = 0; p < page_count; ++p)
    if (gt_classes[p] == pred_classes[p]) ++out.pages_correct;
  out.ordered_matches = greedy_matches(truth, predicted, [](const std::vector<int>& a, const std::vector<int>& b) { return a == b; });
  out.unordered_matches = greedy_matches(truth, predicted, [](std::vector<int> a, std::vector<int> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return a == b;
  });
  return out;
}

SplitReport aggregate_split(std::vector<PacketSplit> packets) {
  SplitReport report;
  std::size_t pages = 0, correct = 0, sections = 0, ordered = 0, unordered = 0;
  for (const auto& p : packets) {
    pages += p.pages;
    correct += p.pages_correct;
    sections += p.gt_sections;
    ordered += p.ordered_matches;
    unordered += p.unordered_matches;
  }
  if (pages > 0) report.page_accuracy = static_cast<double>(correct) / static_cast<double>(pages);
  if (sections > 0) {
    report.ordered_accuracy = static_cast<double>(ordered) / static_cast<double>(sections);
    report.unordered_accuracy = static_cast<double>(unordered) / static_cast<double>(sections);
  }
  report.packets = std::move(packets);
  return report;
}

json to_json(const SplitReport& report) {
  json packets = json::array();
  for (const auto& p : report.packets)
    packets.push_back({{"packet_id", p.packet_id},
                       {"pages", p.pages},
                       {"pages_correct", p.pages_correct},
                       {"gt_sections", p.gt_sections},
                       {"ordered_matches", p.ordered_matches},
                       {"unordered_matches", p.unordered_matches}});
  return json{{"page_accuracy", report.page_accuracy},
              {"ordered_accuracy", report.ordered_accuracy},
              {"unordered_accuracy", report.unordered_accuracy},
              {"packets", std::move(packets)}};
}

}  // namespace docpipe
