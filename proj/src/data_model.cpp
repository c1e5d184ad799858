#include "cashbench/data_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include "cashbench/errors.hpp"
#include "cashbench/stats.hpp"

namespace cashbench {

const char* arm_name(Arm arm) {
  switch (arm) {
    case Arm::Control: return "control";
    case Arm::Gikuriro: return "gikuriro";
    case Arm::GdLower: return "gd_lower";
    case Arm::GdMiddle: return "gd_middle";
    case Arm::GdUpper: return "gd_upper";
    case Arm::GdLarge: return "gd_large";
  }
  return "?";
}

Arm arm_from_name(const std::string& name) {
  for (int a = 0; a < kNumArms; ++a) {
    if (name == arm_name(static_cast<Arm>(a))) return static_cast<Arm>(a);
  }
  throw ValidationError("unknown arm label: '" + name + "'");
}

bool is_gd_arm(Arm arm) {
  return arm == Arm::GdLower || arm == Arm::GdMiddle || arm == Arm::GdUpper ||
         arm == Arm::GdLarge;
}

bool is_treated_arm(Arm arm) { return arm != Arm::Control; }

StudyDesign StudyDesign::reference() {
  // Villages per arm and realized mean household transfers for the GD arms.
  const std::array<int, kNumArms> quota = {74, 74, 22, 22, 22, 34};
  const std::array<double, kNumArms> transfer = {0, 0, 41.32, 83.63, 116.91, 532.00};
  const int total = 248;
  const int n_blocks = 22;

  StudyDesign d;
  d.blocks.resize(n_blocks);
  for (int b = 0; b < n_blocks; ++b) d.blocks[b] = b;

  // Deal arms proportionally down the village list so every block gets a
  // representative mix, then assign blocks round-robin.
  std::array<int, kNumArms> dealt{};
  for (int i = 0; i < total; ++i) {
    int pick = -1;
    double best = -1e9;
    for (int a = 0; a < kNumArms; ++a) {
      if (dealt[a] >= quota[a]) continue;
      double deficit =
          static_cast<double>(i + 1) * quota[a] / total - dealt[a];
      if (deficit > best + 1e-12) {
        best = deficit;
        pick = a;
      }
    }
    Village v;
    v.id = i + 1;
    v.block = i % n_blocks;
    v.arm = static_cast<Arm>(pick);
    if (is_gd_arm(v.arm)) v.assigned_transfer = transfer[pick];
    d.villages.push_back(v);
    ++dealt[pick];
  }
  return d;
}

void StudyDesign::validate() const {
  std::set<int> block_ids(blocks.begin(), blocks.end());
  if (block_ids.size() != blocks.size()) {
    throw ValidationError("duplicate block ids in design");
  }
  std::set<int> village_ids;
  for (const auto& v : villages) {
    if (!village_ids.insert(v.id).second) {
      throw ValidationError("duplicate village id " + std::to_string(v.id));
    }
    if (!block_ids.count(v.block)) {
      throw ValidationError("village " + std::to_string(v.id) +
                            " references unknown block " +
                            std::to_string(v.block));
    }
    if (is_gd_arm(v.arm) != v.assigned_transfer.has_value()) {
      throw ValidationError(
          "village " + std::to_string(v.id) +
          ": assigned transfer must be present iff the arm is a GD arm");
    }
    if (v.assigned_transfer && *v.assigned_transfer <= 0.0) {
      throw ValidationError("village " + std::to_string(v.id) +
                            ": nonpositive assigned transfer");
    }
  }
}

const Village& StudyDesign::village(int id) const {
  for (const auto& v : villages) {
    if (v.id == id) return v;
  }
  throw ValidationError("unknown village id " + std::to_string(id));
}

std::array<int, kNumArms> StudyDesign::arm_counts() const {
  std::array<int, kNumArms> counts{};
  for (const auto& v : villages) counts[static_cast<int>(v.arm)]++;
  return counts;
}

std::optional<double> HouseholdRow::outcome(const std::string& name,
                                            Round round) const {
  auto it = outcomes.find({name, round});
  if (it == outcomes.end()) return std::nullopt;
  return it->second;
}

bool HouseholdRow::attrited(const std::string& endline_outcome) const {
  return !outcome(endline_outcome, Round::Endline).has_value();
}

std::optional<double> IndividualRow::outcome(const std::string& name,
                                             Round round) const {
  auto it = outcomes.find({name, round});
  if (it == outcomes.end()) return std::nullopt;
  return it->second;
}

bool SubpopFilter::admits(const IndividualRow& row) const {
  if (role && row.role != *role) return false;
  if (max_age_months && row.age_months > *max_age_months) return false;
  if (min_age_months && row.age_months < *min_age_months) return false;
  return true;
}

double ihs(double x) {
  if (!std::isfinite(x)) throw ValidationError("ihs: non-finite input");
  if (x < 0.0) return -ihs(-x);
  return std::log(x + std::sqrt(x * x + 1.0));
}

std::vector<double> winsorize(std::span<const double> values, double lo,
                              double hi) {
  if (values.empty()) throw ValidationError("winsorize: empty input");
  if (!(0.0 <= lo && lo < hi && hi <= 1.0)) {
    throw ValidationError("winsorize: quantiles must satisfy 0 <= lo < hi <= 1");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw ValidationError("winsorize: non-finite input");
  }
  double cap_lo = quantile_type7(values, lo);
  double cap_hi = quantile_type7(values, hi);
  std::vector<double> out(values.begin(), values.end());
  for (double& v : out) v = std::clamp(v, cap_lo, cap_hi);
  return out;
}

int AnalysisFrame::covariate_index(const std::string& name) const {
  for (std::size_t i = 0; i < covariate_names.size(); ++i) {
    if (covariate_names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

bool never_treated_stratum(const HouseholdRow& h) {
  // Cash went only to ineligibles in Ubudehe 1-2 with 3+ members; the rest
  // form the experimentally clean spillover subsample.
  return h.stratum == Stratum::Ineligible && (h.ubudehe >= 3 || h.members < 3);
}

struct SelectedHousehold {
  const HouseholdRow* row;
  double weight;
  Arm arm;
  int block;
};

std::vector<double> apply_transform(const Transform& t,
                                    std::span<const double> raw) {
  std::vector<double> v(raw.begin(), raw.end());
  if (t.kind == Transform::Kind::Winsorize ||
      t.kind == Transform::Kind::WinsorizeThenIhs) {
    v = winsorize(v, t.lo, t.hi);
  }
  if (t.kind == Transform::Kind::Ihs ||
      t.kind == Transform::Kind::WinsorizeThenIhs) {
    for (double& x : v) x = ihs(x);
  }
  return v;
}

}  // namespace

AnalysisFrame build_analysis_frame(const Dataset& data,
                                   const OutcomeSpec& outcome,
                                   WeightMode mode,
                                   const FrameOptions& options) {
  AnalysisFrame frame;
  frame.outcome_name = outcome.name;
  frame.mode = mode;

  // Pass 1: select households, resolve weights.
  std::vector<SelectedHousehold> selected;
  for (const auto& h : data.households) {
    const Village& v = data.design.village(h.village_id);
    bool keep = false;
    double w = h.sampling_weight * h.tracking_weight;
    if (h.sampling_weight <= 0.0 || h.tracking_weight <= 0.0) {
      throw ValidationError("household " + std::to_string(h.household_id) +
                            ": weights must be strictly positive");
    }
    switch (mode) {
      case WeightMode::EligibleITT:
        keep = h.stratum == Stratum::Eligible;
        break;
      case WeightMode::PopulationTCE:
        keep = true;
        break;
      case WeightMode::SpilloverNeverTreat:
        keep = never_treated_stratum(h) && v.arm != Arm::Gikuriro;
        // Weight by the probability of not being treated; a household the
        // cash program did treat contributes nothing.
        if (keep && is_gd_arm(v.arm) && h.complied) w = 0.0;
        break;
    }
    if (!keep) continue;
    selected.push_back({&h, w, v.arm, v.block});
  }
  if (selected.empty()) {
    throw EstimationError("analysis frame for '" + outcome.name +
                          "' is empty under weight mode");
  }

  // Pass 2: collect outcome rows (unit = household or admitted individual).
  struct Row {
    const SelectedHousehold* hh;
    int unit_id;
    double endline;
    std::optional<double> baseline;
    const IndividualRow* indiv;  // null at household level
  };
  std::vector<Row> rows;
  bool saw_outcome_key = false;
  if (outcome.level == OutcomeLevel::Household) {
    for (const auto& s : selected) {
      auto base = s.row->outcome(outcome.name, Round::Baseline);
      auto end = s.row->outcome(outcome.name, Round::Endline);
      if (base || end) saw_outcome_key = true;
      if (!end) continue;  // attriter: dropped from outcome regressions
      rows.push_back({&s, s.row->household_id, *end, base, nullptr});
    }
  } else {
    std::map<int, const SelectedHousehold*> by_household;
    for (const auto& s : selected) by_household[s.row->household_id] = &s;
    for (const auto& ind : data.individuals) {
      auto it = by_household.find(ind.household_id);
      if (it == by_household.end()) continue;
      if (!outcome.subpop.admits(ind)) continue;
      auto base = ind.outcome(outcome.name, Round::Baseline);
      auto end = ind.outcome(outcome.name, Round::Endline);
      if (base || end) saw_outcome_key = true;
      if (!end) continue;
      rows.push_back({it->second, ind.individual_id, *end, base, &ind});
    }
  }
  if (!saw_outcome_key) {
    throw ValidationError("unknown outcome '" + outcome.name +
                          "': no unit carries it at any round");
  }
  if (rows.empty()) {
    throw EstimationError("outcome '" + outcome.name +
                          "' has no endline observations in this frame");
  }

  const long n = static_cast<long>(rows.size());

  // Transforms: winsorize on the raw estimation sample, then IHS.
  std::vector<double> raw_end(n);
  for (long i = 0; i < n; ++i) raw_end[i] = rows[i].endline;
  std::vector<double> end_t = apply_transform(outcome.transform, raw_end);

  std::vector<double> base_present;
  for (const auto& r : rows) {
    if (r.baseline) base_present.push_back(*r.baseline);
  }
  frame.has_lagged = !base_present.empty();
  std::vector<double> base_t;
  if (frame.has_lagged) {
    base_t = apply_transform(outcome.transform, base_present);
  }

  frame.outcome.resize(n);
  frame.lagged = Eigen::VectorXd::Zero(n);
  frame.lagged_missing = Eigen::VectorXd::Zero(n);
  frame.weight.resize(n);
  frame.eligible_indicator.resize(n);
  frame.village.resize(n);
  frame.block.resize(n);
  frame.arm.resize(n);
  frame.household_id.resize(n);
  frame.unit_id.resize(n);
  frame.assigned_lumpsum.assign(n, -1);
  frame.chose_lumpsum.assign(n, -1);
  frame.in_choice_arm.assign(n, -1);

  std::size_t base_cursor = 0;
  for (long i = 0; i < n; ++i) {
    const Row& r = rows[i];
    const HouseholdRow& h = *r.hh->row;
    frame.outcome[i] = end_t[i];
    if (r.baseline) {
      frame.lagged[i] = base_t[base_cursor++];
    } else {
      frame.lagged_missing[i] = 1.0;
      frame.any_lagged_missing = true;
    }
    double w = r.hh->weight;
    if (options.weight_multiplier) {
      // Keyed by the frame's unit: individual id at individual level.
      auto it = options.weight_multiplier->find(r.unit_id);
      if (it != options.weight_multiplier->end()) w *= it->second;
    }
    frame.weight[i] = w;
    frame.eligible_indicator[i] = h.stratum == Stratum::Eligible ? 1.0 : 0.0;
    frame.village[i] = h.village_id;
    frame.block[i] = r.hh->block;
    frame.arm[i] = r.hh->arm;
    frame.household_id[i] = h.household_id;
    frame.unit_id[i] = r.unit_id;
    if (h.choice) {
      frame.assigned_lumpsum[i] = h.choice->assigned == Modality::LumpSum;
      frame.chose_lumpsum[i] = h.choice->chose_lump_sum ? 1 : 0;
      frame.in_choice_arm[i] = h.choice->in_choice_arm ? 1 : 0;
    }
  }

  // Missing baseline: impute the weighted arm-specific mean so the row stays
  // in sample; the indicator column absorbs differential missingness.
  if (frame.has_lagged && frame.any_lagged_missing) {
    std::array<double, kNumArms> sum{}, wsum{};
    double all_sum = 0.0, all_w = 0.0;
    for (long i = 0; i < n; ++i) {
      if (frame.lagged_missing[i] > 0.5) continue;
      int a = static_cast<int>(frame.arm[i]);
      sum[a] += frame.weight[i] * frame.lagged[i];
      wsum[a] += frame.weight[i];
      all_sum += frame.weight[i] * frame.lagged[i];
      all_w += frame.weight[i];
    }
    for (long i = 0; i < n; ++i) {
      if (frame.lagged_missing[i] < 0.5) continue;
      int a = static_cast<int>(frame.arm[i]);
      frame.lagged[i] = wsum[a] > 0.0 ? sum[a] / wsum[a] : all_sum / all_w;
    }
  }

  // Candidate controls: requested names, or every key present on all
  // selected households (sorted for determinism).
  std::vector<std::string> names = options.covariate_names;
  if (names.empty()) {
    std::map<std::string, long> seen;
    for (long i = 0; i < n; ++i) {
      for (const auto& [k, _] : rows[i].hh->row->covariates) seen[k]++;
    }
    for (const auto& [k, count] : seen) {
      if (count == n) names.push_back(k);
    }
  }
  bool individual_level = outcome.level == OutcomeLevel::Individual;
  std::vector<std::string> all_names = names;
  if (individual_level) {
    all_names.push_back("female");
    all_names.push_back("age_months");
  }
  frame.covariate_names = all_names;
  frame.covariates.resize(n, static_cast<long>(all_names.size()));
  for (long i = 0; i < n; ++i) {
    const HouseholdRow& h = *rows[i].hh->row;
    for (std::size_t j = 0; j < names.size(); ++j) {
      auto it = h.covariates.find(names[j]);
      if (it == h.covariates.end()) {
        throw ValidationError("household " + std::to_string(h.household_id) +
                              " lacks covariate '" + names[j] + "'");
      }
      frame.covariates(i, static_cast<long>(j)) = it->second;
    }
    if (individual_level) {
      frame.covariates(i, static_cast<long>(names.size())) =
          rows[i].indiv->female ? 1.0 : 0.0;
      frame.covariates(i, static_cast<long>(names.size()) + 1) =
          rows[i].indiv->age_months;
    }
  }

  if (mode == WeightMode::PopulationTCE) {
    bool has_elig = false, has_inelig = false;
    for (long i = 0; i < n; ++i) {
      (frame.eligible_indicator[i] > 0.5 ? has_elig : has_inelig) = true;
    }
    if (!has_elig || !has_inelig) {
      throw ValidationError(
          "PopulationTCE frame requires both strata to be present");
    }
  }
  return frame;
}

}  // namespace cashbench
