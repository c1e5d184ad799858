#pragma once

#include <array>
#include <optional>
#include <vector>

#include "cashbench/data_model.hpp"

namespace cashbench {

// Ex-post cost accounting for one arm.  Averted costs are spent only on
// complying households; non-averted (village-level) components are spent
// regardless.
struct ArmCostLedger {
  Arm arm = Arm::Control;
  double cost_per_beneficiary = 0.0;  // USD
  double averted_share = 0.0;         // in [0,1]
  double compliance_eligible = 0.0;   // in [0,1]
  double compliance_population = 0.0; // in [0,1]

  void validate() const;
};

struct CostLedgerSet {
  std::vector<ArmCostLedger> arms;

  const ArmCostLedger* find(Arm arm) const;
  const ArmCostLedger& require(Arm arm) const;

  // Ledger reproducing the published ex-post costing table.  Compliance is
  // stored at the precision implied by the cost rows themselves (the printed
  // rates are rounded to 2 d.p., which alone moves village-level costs by
  // several percent).
  static CostLedgerSet reference();
};

// c*(1-a) + c*a*r_e: non-averted spend plus averted spend on compliers.
double cost_per_eligible(const ArmCostLedger& ledger);

// c*r_p: total program spend amortized over all village households.
double cost_per_village_household(const ArmCostLedger& ledger);

// Deviation of the arm's cost from the in-kind benchmark; zero for control
// and Gikuriro villages.
double tau_for_village(Arm arm, const CostLedgerSet& ledgers, double benchmark);

// Benchmark C defaults to the Gikuriro cost per eligible household.
double default_benchmark(const CostLedgerSet& ledgers);

// Per-village cost deviations for a whole design.
struct TauAssignment {
  double benchmark = 0.0;
  std::vector<double> tau;  // aligned with design.villages

  static TauAssignment from_cost_per_eligible(
      const StudyDesign& design, const CostLedgerSet& ledgers,
      std::optional<double> benchmark_override = std::nullopt);
  static TauAssignment from_cost_per_village_household(
      const StudyDesign& design, const CostLedgerSet& ledgers,
      std::optional<double> benchmark_override = std::nullopt);
};

struct TransferSchedule {
  std::vector<double> usd;
  std::vector<long> rwf;
  double exchange_rate = 790.0;  // RwF per USD
  double per_capita_rate = 0.0;
};

constexpr double kRwfPerUsd = 790.0;
constexpr int kMinTransferMembers = 3;
constexpr int kMaxTransferMembers = 8;

// Scales household transfers by clamped household size while preserving the
// village mean exactly (before currency rounding); RwF amounts round to the
// nearest hundred.
TransferSchedule scale_transfers(double village_target_mean,
                                 std::span<const int> household_sizes,
                                 double exchange_rate = kRwfPerUsd);

}  // namespace cashbench
