#include "osseg/ablation.hpp"

#include <json.hpp>

#include "osseg/volume_io.hpp"

namespace osseg {

std::string config_hash_of(const TrainConfig& cfg) {
  const std::string text = train_config_text(cfg);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string AblationResult::to_json() const {
  nlohmann::json j;
  j["variant"] = variant_name(variant);
  j["config_hash"] = config_hash;
  j["report"] = nlohmann::json::parse(report.to_json());
  return j.dump(2);
}

namespace {

EvalReport evaluate_segmenter(const SegmentationNet& seg,
                              const std::vector<std::pair<Volume, LabelMap>>& heldout) {
  std::vector<DiceResult> per_subject;
  for (const auto& [image, labels] : heldout) {
    Prediction pred = segment(seg, image);
    per_subject.push_back(dice_score(argmax_labels(pred.probs()), labels));
  }
  return aggregate_dice(per_subject);
}

}  // namespace

std::vector<AblationResult> run_ablation(const TrainConfig& base, const Cohort& cohort,
                                         const std::vector<Variant>& variants,
                                         const TrainHooks& hooks) {
  require(!variants.empty(), "no variants requested");
  std::vector<AblationResult> results;
  for (Variant v : variants) {
    for (const auto& prev : results)
      require(prev.variant != v, "duplicate variant '" + variant_name(v) + "'");
    TrainConfig cfg = base;
    cfg.variant = v;
    TrainState state = train(cfg, cohort.atlas, cohort.unlabeled, cohort.heldout, hooks);
    AblationResult r;
    r.variant = v;
    r.config_hash = config_hash_of(cfg);
    r.report = evaluate_segmenter(state.seg, cohort.heldout);
    results.push_back(std::move(r));
  }
  return results;
}

std::vector<ScarcityPoint> run_scarcity(const TrainConfig& base, const Cohort& cohort,
                                        const std::vector<Variant>& variants,
                                        const std::vector<int>& counts) {
  require(!counts.empty(), "no unlabeled counts requested");
  std::vector<ScarcityPoint> points;
  for (int count : counts) {
    require(count >= 1 && count <= static_cast<int>(cohort.unlabeled.size()),
            "unlabeled count " + std::to_string(count) + " exceeds the cohort");
    const std::vector<Volume> subset(cohort.unlabeled.begin(), cohort.unlabeled.begin() + count);
    for (Variant v : variants) {
      TrainConfig cfg = base;
      cfg.variant = v;
      TrainState state = train(cfg, cohort.atlas, subset, cohort.heldout);
      points.push_back(
          {v, count, evaluate_segmenter(state.seg, cohort.heldout).mean});
    }
  }
  return points;
}

std::string scarcity_to_json(const std::vector<ScarcityPoint>& points) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : points)
    arr.push_back({{"variant", variant_name(p.variant)},
                   {"unlabeled_count", p.unlabeled_count},
                   {"mean_dice", p.mean_dice}});
  return arr.dump(2);
}

}  // namespace osseg
