#include "osseg/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace osseg {

DiceResult dice_score(const LabelMap& pred, const LabelMap& gt) {
  require(pred.shape() == gt.shape(), "dice_score: shape mismatch");
  require(pred.num_classes() == gt.num_classes(), "dice_score: class count mismatch");
  const int C = gt.num_classes();
  std::vector<std::int64_t> inter(static_cast<std::size_t>(C), 0);
  std::vector<std::int64_t> count_pred(static_cast<std::size_t>(C), 0);
  std::vector<std::int64_t> count_gt(static_cast<std::size_t>(C), 0);
  for (std::int64_t v = 0; v < gt.size(); ++v) {
    ++count_pred[static_cast<std::size_t>(pred[v])];
    ++count_gt[static_cast<std::size_t>(gt[v])];
    if (pred[v] == gt[v]) ++inter[static_cast<std::size_t>(gt[v])];
  }

  DiceResult r;
  double sum = 0.0;
  for (int c = 1; c < C; ++c) {
    const std::int64_t denom = count_pred[static_cast<std::size_t>(c)] +
                               count_gt[static_cast<std::size_t>(c)];
    // a class missing from both prediction and truth counts as a perfect match
    const double d = denom == 0 ? 1.0
                                : 2.0 * static_cast<double>(inter[static_cast<std::size_t>(c)]) /
                                      static_cast<double>(denom);
    r.per_class.push_back(d);
    sum += d;
  }
  r.mean = r.per_class.empty() ? 1.0 : sum / static_cast<double>(r.per_class.size());
  return r;
}

EvalReport aggregate_dice(const std::vector<DiceResult>& subjects) {
  EvalReport rep;
  if (subjects.empty()) return rep;

  const std::size_t classes = subjects.front().per_class.size();
  std::vector<double> class_sum(classes, 0.0);
  double sum = 0.0, sum2 = 0.0;
  rep.min = 1.0;
  rep.max = 0.0;
  for (const auto& s : subjects) {
    rep.per_subject.push_back(s.mean);
    sum += s.mean;
    sum2 += s.mean * s.mean;
    rep.min = std::min(rep.min, s.mean);
    rep.max = std::max(rep.max, s.mean);
    for (std::size_t c = 0; c < classes; ++c) class_sum[c] += s.per_class[c];
  }
  const double n = static_cast<double>(subjects.size());
  rep.mean = sum / n;
  rep.stddev = std::sqrt(std::max(0.0, sum2 / n - rep.mean * rep.mean));
  for (std::size_t c = 0; c < classes; ++c)
    rep.per_class_dice[static_cast<int>(c + 1)] = class_sum[c] / n;
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["mean"] = mean;
  j["stddev"] = stddev;
  j["min"] = min;
  j["max"] = max;
  j["per_subject"] = per_subject;
  nlohmann::json pc;
  for (const auto& [cls, d] : per_class_dice) pc[std::to_string(cls)] = d;
  j["per_class_dice"] = pc;
  return j.dump(2);
}

EvalReport EvalReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EvalReport rep;
  rep.mean = j.at("mean").get<double>();
  rep.stddev = j.at("stddev").get<double>();
  rep.min = j.at("min").get<double>();
  rep.max = j.at("max").get<double>();
  rep.per_subject = j.at("per_subject").get<std::vector<double>>();
  for (auto& [key, val] : j.at("per_class_dice").items())
    rep.per_class_dice[std::stoi(key)] = val.get<double>();
  return rep;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  os << "subjects: " << per_subject.size() << "\n";
  char line[128];
  std::snprintf(line, sizeof(line), "mean dice: %.4f +- %.4f  (min %.4f, max %.4f)\n", mean,
                stddev, min, max);
  os << line;
  for (const auto& [cls, d] : per_class_dice) {
    std::snprintf(line, sizeof(line), "  class %2d: %.4f\n", cls, d);
    os << line;
  }
  return os.str();
}

}  // namespace osseg
