#pragma once

#include <string>
#include <vector>

#include "osseg/eval.hpp"
#include "osseg/phantom.hpp"
#include "osseg/trainer.hpp"

namespace osseg {

// One trained-and-evaluated pipeline variant.
struct AblationResult {
  Variant variant = Variant::Vanilla;
  EvalReport report;
  std::string config_hash;  // hex digest of the exact config that trained it

  std::string to_json() const;
};

std::string config_hash_of(const TrainConfig& cfg);

// Trains the requested variants from the same seed and cohort and evaluates
// each on the held-out subjects. Results keep the request order.
std::vector<AblationResult> run_ablation(const TrainConfig& base, const Cohort& cohort,
                                         const std::vector<Variant>& variants,
                                         const TrainHooks& hooks = {});

// Data-scarcity sweep: per unlabeled-budget count, train the requested
// variants on a truncated unlabeled set and record heldout Dice.
struct ScarcityPoint {
  Variant variant;
  int unlabeled_count = 0;
  double mean_dice = 0.0;
};

std::vector<ScarcityPoint> run_scarcity(const TrainConfig& base, const Cohort& cohort,
                                        const std::vector<Variant>& variants,
                                        const std::vector<int>& counts);

std::string scarcity_to_json(const std::vector<ScarcityPoint>& points);

}  // namespace osseg
