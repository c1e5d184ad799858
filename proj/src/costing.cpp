#include "cashbench/costing.hpp"

#include <cmath>

#include "cashbench/errors.hpp"

namespace cashbench {

void ArmCostLedger::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (cost_per_beneficiary < 0.0) {
    throw ValidationError("ledger: negative cost per beneficiary");
  }
  if (!in_unit(averted_share) || !in_unit(compliance_eligible) ||
      !in_unit(compliance_population)) {
    throw ValidationError("ledger: shares and compliance rates must lie in [0,1]");
  }
}

const ArmCostLedger* CostLedgerSet::find(Arm arm) const {
  for (const auto& l : arms) {
    if (l.arm == arm) return &l;
  }
  return nullptr;
}

const ArmCostLedger& CostLedgerSet::require(Arm arm) const {
  const ArmCostLedger* l = find(arm);
  if (!l) {
    throw ValidationError(std::string("no cost ledger for arm ") + arm_name(arm));
  }
  return *l;
}

CostLedgerSet CostLedgerSet::reference() {
  // Cost per beneficiary and averted shares as published; compliance backed
  // out of the published per-eligible and per-village-household cost rows:
  //   r_e = (cpe - c*(1-a)) / (c*a),  r_p = cpv / c.
  // Printed rates (0.80/0.81/0.86/0.83/0.91 and 0.19/0.18/0.19/0.18/0.18)
  // are these values rounded to 2 d.p.
  CostLedgerSet s;
  s.arms = {
      {Arm::Gikuriro, 141.84, 0.60, 0.796132, 0.197547},
      {Arm::GdLower, 66.02, 1.00, 0.811572, 0.184792},
      {Arm::GdMiddle, 111.09, 1.00, 0.862904, 0.187506},
      {Arm::GdUpper, 145.43, 1.00, 0.833666, 0.183525},
      {Arm::GdLarge, 566.55, 1.00, 0.913318, 0.175731},
  };
  return s;
}

double cost_per_eligible(const ArmCostLedger& ledger) {
  ledger.validate();
  double c = ledger.cost_per_beneficiary;
  double a = ledger.averted_share;
  return c * (1.0 - a) + c * a * ledger.compliance_eligible;
}

double cost_per_village_household(const ArmCostLedger& ledger) {
  ledger.validate();
  return ledger.cost_per_beneficiary * ledger.compliance_population;
}

double default_benchmark(const CostLedgerSet& ledgers) {
  return cost_per_eligible(ledgers.require(Arm::Gikuriro));
}

double tau_for_village(Arm arm, const CostLedgerSet& ledgers,
                       double benchmark) {
  if (!is_gd_arm(arm)) return 0.0;
  const ArmCostLedger* l = ledgers.find(arm);
  if (!l) {
    throw ValidationError(std::string("missing cost ledger for GD arm ") +
                          arm_name(arm));
  }
  return cost_per_eligible(*l) - benchmark;
}

TauAssignment TauAssignment::from_cost_per_eligible(
    const StudyDesign& design, const CostLedgerSet& ledgers,
    std::optional<double> benchmark_override) {
  TauAssignment t;
  t.benchmark = benchmark_override.value_or(default_benchmark(ledgers));
  t.tau.reserve(design.villages.size());
  for (const auto& v : design.villages) {
    t.tau.push_back(tau_for_village(v.arm, ledgers, t.benchmark));
  }
  return t;
}

TauAssignment TauAssignment::from_cost_per_village_household(
    const StudyDesign& design, const CostLedgerSet& ledgers,
    std::optional<double> benchmark_override) {
  TauAssignment t;
  t.benchmark = benchmark_override.value_or(
      cost_per_village_household(ledgers.require(Arm::Gikuriro)));
  t.tau.reserve(design.villages.size());
  for (const auto& v : design.villages) {
    if (!is_gd_arm(v.arm)) {
      t.tau.push_back(0.0);
      continue;
    }
    t.tau.push_back(cost_per_village_household(ledgers.require(v.arm)) -
                    t.benchmark);
  }
  return t;
}

TransferSchedule scale_transfers(double village_target_mean,
                                 std::span<const int> household_sizes,
                                 double exchange_rate) {
  if (household_sizes.empty()) {
    throw ValidationError("scale_transfers: no household sizes");
  }
  if (village_target_mean <= 0.0) {
    throw ValidationError("scale_transfers: target mean must be positive");
  }
  bool all_zero = true;
  for (int s : household_sizes) all_zero = all_zero && s == 0;
  if (all_zero) throw ValidationError("scale_transfers: all household sizes zero");

  double clamped_mean = 0.0;
  for (int s : household_sizes) {
    clamped_mean += std::clamp(s, kMinTransferMembers, kMaxTransferMembers);
  }
  clamped_mean /= static_cast<double>(household_sizes.size());

  TransferSchedule sched;
  sched.exchange_rate = exchange_rate;
  sched.per_capita_rate = village_target_mean / clamped_mean;
  for (int s : household_sizes) {
    double usd = sched.per_capita_rate *
                 std::clamp(s, kMinTransferMembers, kMaxTransferMembers);
    sched.usd.push_back(usd);
    // Currency rounding happens last: nearest 100 RwF.
    sched.rwf.push_back(
        static_cast<long>(std::llround(usd * exchange_rate / 100.0)) * 100);
  }
  return sched;
}

}  // namespace cashbench
