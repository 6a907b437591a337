#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "fudd/pipeline.hpp"

namespace fudd {

using json = nlohmann::ordered_json;

// Report file schema (JSON object, keys in this order):
//   dataset, method, k, augment, n_images, n_correct, accuracy,
//   per_class {class_id: {correct, total, accuracy}},
//   pairs_used, fallback_pairs, skipped_parse_blocks, n_failed
// backend_calls is left out: it depends on what an earlier run cached, and
// report files must be reproducible.
std::string report_to_json(const EvalReport& r) {
  json per_class = json::object();
  for (const auto& [id, t] : r.per_class) {
    per_class[id] = {{"correct", t.correct},
                     {"total", t.total},
                     {"accuracy", r.class_accuracy(id)}};
  }
  json doc = {{"dataset", r.dataset},
              {"method", to_string(r.method)},
              {"k", r.k},
              {"augment", r.augment},
              {"n_images", r.n_images},
              {"n_correct", r.n_correct},
              {"accuracy", r.accuracy},
              {"per_class", std::move(per_class)},
              {"pairs_used", r.pairs_used},
              {"fallback_pairs", r.fallback_pairs},
              {"skipped_parse_blocks", r.skipped_parse_blocks},
              {"n_failed", r.n_failed}};
  return doc.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  try {
    const auto doc = json::parse(text);
    EvalReport r;
    r.dataset = doc.at("dataset").get<std::string>();
    r.method = method_from_string(doc.at("method").get<std::string>());
    r.k = doc.at("k").get<std::size_t>();
    r.augment = doc.at("augment").get<bool>();
    r.n_images = doc.at("n_images").get<std::size_t>();
    r.n_correct = doc.at("n_correct").get<std::size_t>();
    r.accuracy = doc.at("accuracy").get<double>();
    for (const auto& [id, t] : doc.at("per_class").items()) {
      r.per_class[id] = {t.at("correct").get<std::size_t>(), t.at("total").get<std::size_t>()};
    }
    r.pairs_used = doc.at("pairs_used").get<std::size_t>();
    r.fallback_pairs = doc.at("fallback_pairs").get<std::size_t>();
    r.skipped_parse_blocks = doc.at("skipped_parse_blocks").get<std::size_t>();
    r.n_failed = doc.at("n_failed").get<std::size_t>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorFamily::format, std::string("report: ") + e.what());
  }
}

std::string report_table(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "method" << std::right << std::setw(5) << "k"
      << std::setw(9) << "images" << std::setw(9) << "correct" << std::setw(11) << "accuracy"
      << std::setw(8) << "pairs" << std::setw(11) << "fallbacks" << "\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(24) << to_string(r.method) << std::right << std::setw(5) << r.k
        << std::setw(9) << r.n_images << std::setw(9) << r.n_correct << std::setw(10)
        << std::fixed << std::setprecision(2) << r.accuracy * 100.0 << "%" << std::setw(8)
        << r.pairs_used << std::setw(11) << r.fallback_pairs << "\n";
  }
  return out.str();
}

std::string sweep_plot_data(std::span<const EvalReport> reports) {
  std::ostringstream out;
  out << "k,accuracy\n";
  out << std::setprecision(17);
  for (const auto& r : reports) out << r.k << "," << r.accuracy << "\n";
  return out.str();
}

std::string trace_to_json_line(const PredictionTrace& t) {
  json doc = {{"image_id", t.image_id},
              {"method", to_string(t.method)},
              {"first_pass_scores", t.first_pass_scores},
              {"ambiguous", t.ambiguous.members},
              {"k", t.ambiguous.k},
              {"final_label", t.final_label}};
  if (t.followup_scores) doc["followup_scores"] = *t.followup_scores;
  return doc.dump() + "\n";
}

}  // namespace fudd
