#pragma once

#include <map>
#include <string>
#include <vector>

#include "osseg/volume.hpp"

namespace osseg {

// Hard-label Dice coefficients 2|A n B| / (|A| + |B|) per foreground class.
// A class absent from both operands scores 1 by convention.
struct DiceResult {
  std::vector<double> per_class;  // index 0 = class 1
  double mean = 0.0;
};

DiceResult dice_score(const LabelMap& pred, const LabelMap& gt);

// Aggregate over a cohort of subjects, mirroring "Mean +- Std, Min, Max"
// reporting plus per-class means.
struct EvalReport {
  std::map<int, double> per_class_dice;  // class -> mean Dice over subjects
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> per_subject;  // subject mean Dice, row order = input order

  std::string to_json() const;
  std::string to_table() const;
  static EvalReport from_json(const std::string& text);
};

EvalReport aggregate_dice(const std::vector<DiceResult>& subjects);

}  // namespace osseg
