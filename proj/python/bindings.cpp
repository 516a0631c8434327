// Python module _core. Structured values cross the boundary as JSON text; the docpipe
// package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "docpipe/batch.hpp"
#include "docpipe/corpus.hpp"
#include "docpipe/evaluation.hpp"
#include "docpipe/rules.hpp"
#include "docpipe/segmentation.hpp"

namespace py = pybind11;
using namespace docpipe;

namespace {

BoundingBox to_box(const std::array<double, 4>& b) { return {b[0], b[1], b[2], b[3]}; }

std::vector<LabeledSection> to_sections(const std::vector<std::pair<std::string, std::vector<int>>>& in) {
  std::vector<LabeledSection> out;
  for (const auto& [cls, pages] : in) out.push_back({cls, pages, json::object()});
  return out;
}

json split_to_json(const PacketSplit& s) {
  return {{"pages", s.pages},
          {"pages_correct", s.pages_correct},
          {"gt_sections", s.gt_sections},
          {"ordered_matches", s.ordered_matches},
          {"unordered_matches", s.unordered_matches}};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "docpipe core bindings";
  py::register_exception<Error>(m, "DocpipeError", PyExc_ValueError);

  m.def("edit_distance", &edit_distance, py::arg("a"), py::arg("b"));
  m.def("similarity", &similarity, py::arg("a"), py::arg("b"), py::arg("normalize_case") = true,
        py::arg("trim") = true);
  m.def("bbox_iou", [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return bbox_iou(to_box(a), to_box(b));
  });

  m.def("hungarian_assign", [](const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size(), cols = n ? rows[0].size() : 0;
    CostMatrix c(n, cols);
    for (std::size_t i = 0; i < n; ++i) {
      if (rows[i].size() != cols) throw ValidationError("cost matrix rows differ in length");
      for (std::size_t j = 0; j < cols; ++j) c(i, j) = rows[i][j];
    }
    const Assignment a = hungarian_assign(c);
    return py::make_tuple(a.pairs, a.total_cost);
  });

  m.def("decode_bio", [](const std::vector<std::string>& labels) {
    std::vector<BioLabel> parsed;
    for (const auto& l : labels) parsed.push_back(BioLabel::parse(l));
    return sections_to_json(decode_bio(parsed)).dump();
  });
  m.def("encode_bio", [](const std::string& sections) {
    std::vector<std::string> out;
    const auto parsed = sections_from_json(parse_document(sections, "sections"));
    for (const auto& l : encode_bio(parsed)) out.push_back(l.str());
    return out;
  });

  m.def("split_metrics",
        [](const std::vector<std::pair<std::string, std::vector<int>>>& truth,
           const std::vector<std::pair<std::string, std::vector<int>>>& predicted, std::size_t page_count) {
          return split_to_json(split_metrics(to_sections(truth), to_sections(predicted), page_count)).dump();
        });

  m.def("evaluate_document", [](const std::string& expected, const std::string& predicted, const std::string& schema) {
    const ClassConfig classes = class_config_from_json(json{{"classes", json::array({parse_document(schema, "schema")})}});
    json out = json::object();
    for (const auto& [k, c] : evaluate_document(parse_document(expected, "expected"),
                                                parse_document(predicted, "predicted"), classes.at(0)))
      out[k] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"weight", c.weight}};
    return out.dump();
  });

  m.def("evaluate_condition", [](const std::string& expression, const std::string& facts) {
    FactTable table;
    std::set<std::string> names;
    const json doc = parse_document(facts, "facts");
    for (const auto& [k, v] : doc.items()) {
      names.insert(k);
      auto& values = table[k];
      if (v.is_array())
        for (const auto& x : v) values.push_back(x);
      else
        values.push_back(v);
    }
    return Condition::parse(expression, names).evaluate(table);
  });

  m.def("gen_corpus",
        [](const std::filesystem::path& classes, const std::filesystem::path& out, int count, std::uint64_t seed,
           double low_confidence_rate) {
          CorpusOptions o;
          o.count = count;
          o.seed = seed;
          o.low_confidence_rate = low_confidence_rate;
          return generate_corpus(load_class_config(classes), o, out).manifest;
        },
        py::arg("classes"), py::arg("out"), py::arg("count") = 10, py::arg("seed") = 42,
        py::arg("low_confidence_rate") = 0.0);

  m.def("process",
        [](const std::filesystem::path& manifest, const std::filesystem::path& out, std::optional<std::filesystem::path> config,
           const std::string& backend) {
          ProcessOptions o;
          o.manifest = manifest;
          o.out = out;
          o.config = std::move(config);
          o.backend = backend;
          ProcessOutcome result;
          {
            py::gil_scoped_release release;
            result = process(o);
          }
          return py::make_tuple(result.exit_code, to_json(result.report).dump());
        },
        py::arg("manifest"), py::arg("out"), py::arg("config") = py::none(), py::arg("backend") = "mock");

  m.def("evaluate",
        [](const std::filesystem::path& results, const std::filesystem::path& baselines, const std::filesystem::path& out) {
          EvaluateOptions o;
          o.results = results;
          o.baselines = baselines;
          o.out = out;
          const EvaluateOutcome r = evaluate_run(o);
          json doc = to_json(r.evaluation);
          if (r.split) doc["split"] = to_json(*r.split);
          doc["missing_baselines"] = r.missing_baselines;
          doc["missing_results"] = r.missing_results;
          return doc.dump();
        },
        py::arg("results"), py::arg("baselines"), py::arg("out"));

  m.def("mask_latency", [](const std::string& doc) { return mask_latency(parse_document(doc, "document")).dump(); });
}
