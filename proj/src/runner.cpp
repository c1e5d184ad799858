#include "cashbench/runner.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "cashbench/errors.hpp"
#include "cashbench/svg.hpp"
#include "cashbench/stats.hpp"
#include "cashbench/tables.hpp"

namespace cashbench {

namespace fs = std::filesystem;

namespace {

void write_artifact(const std::string& dir, const std::string& name,
                    const CsvTable& table, std::ostream& log) {
  fs::create_directories(dir);
  write_csv(dir + "/" + name, table);
  log << "wrote " << dir << "/" << name << "\n";
}

void write_text_artifact(const std::string& dir, const std::string& name,
                         const std::string& text, std::ostream& log) {
  fs::create_directories(dir);
  std::ofstream f(dir + "/" + name, std::ios::binary);
  if (!f) throw ValidationError("cannot write artifact " + name);
  f << text;
  log << "wrote " << dir << "/" << name << "\n";
}

EstimatorContext make_context(const RunConfig& config, const Dataset& data) {
  EstimatorContext ctx;
  ctx.data = &data;
  ctx.ledger = config.ledger;
  ctx.benchmark_override = config.benchmark_override;
  ctx.always_keep_covariates = config.always_keep;
  ctx.lasso_controls = config.lasso_controls;
  ctx.selection = config.lasso;
  ctx.cluster_level = config.cluster_level;
  ctx.propensity_floor = config.propensity_floor;
  return ctx;
}

void require_ledger(const RunConfig& config, const std::string& command) {
  if (!config.ledger_provided) {
    throw ValidationError("command '" + command +
                          "' requires a cost ledger in the run config");
  }
}

std::vector<OutcomeSpec> outcomes_of_family(const RunConfig& config,
                                            OutcomeFamily family) {
  std::vector<OutcomeSpec> out;
  for (const auto& o : config.outcomes) {
    if (o.family == family) out.push_back(o);
  }
  return out;
}

const char* family_suffix(OutcomeFamily family) {
  return family == OutcomeFamily::Primary ? "primary" : "secondary";
}

// Attaches sharpened q-values to the treatment-coefficient p-values pooled
// within one table (FDR control runs table by table).
void attach_qvalues(std::vector<EstimateTableRow>& rows) {
  std::vector<double> pvals;
  for (const auto& row : rows) {
    pvals.insert(pvals.end(), row.pvalues.begin(), row.pvalues.end());
  }
  if (pvals.empty()) return;
  std::vector<double> qvals = sharpened_q(pvals);
  std::size_t cursor = 0;
  for (auto& row : rows) {
    row.qvalues.assign(qvals.begin() + cursor,
                       qvals.begin() + cursor + row.pvalues.size());
    cursor += row.pvalues.size();
  }
}

struct RatioTestPair {
  double p_gd_vs_gdl = 1.0;
  double p_gk_vs_gdl = 1.0;
};

RatioTestPair itt_ratio_tests(const EstimatorContext& ctx, const FitResult& fit) {
  double c_gk = cost_per_eligible(ctx.ledger.require(Arm::Gikuriro));
  double c_main = (cost_per_eligible(ctx.ledger.require(Arm::GdLower)) +
                   cost_per_eligible(ctx.ledger.require(Arm::GdMiddle)) +
                   cost_per_eligible(ctx.ledger.require(Arm::GdUpper))) /
                  3.0;
  double c_large = cost_per_eligible(ctx.ledger.require(Arm::GdLarge));
  RatioTestPair out;
  out.p_gd_vs_gdl =
      wald(fit, bcr_equality_hypothesis(fit.index_of(kGdMain),
                                        fit.index_of(kGdLarge), c_main,
                                        c_large, fit.k))
          .p;
  out.p_gk_vs_gdl =
      wald(fit, bcr_equality_hypothesis(fit.index_of(kGikuriro),
                                        fit.index_of(kGdLarge), c_gk, c_large,
                                        fit.k))
          .p;
  return out;
}

EstimateTableRow row_from_itt(const EstimatorContext& ctx,
                              const std::string& outcome,
                              const IttResult& result, bool ratio_tests) {
  EstimateTableRow row;
  row.outcome = outcome;
  for (const auto& name : result.treatment_names) {
    int idx = result.fit.index_of(name);
    row.coefficients.push_back(result.fit.beta[idx]);
    row.ses.push_back(result.fit.se(idx));
    row.pvalues.push_back(result.fit.pvalue(idx));
  }
  row.control_mean = result.control_mean;
  row.control_sd = result.control_sd;
  row.n = result.fit.n;
  row.r2 = result.fit.r2;
  if (ratio_tests) {
    RatioTestPair tests = itt_ratio_tests(ctx, result.fit);
    row.extra = {tests.p_gd_vs_gdl, tests.p_gk_vs_gdl};
  }
  return row;
}

void cmd_validate(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  data.design.validate();
  for (const auto& h : data.households) {
    if (!(h.sampling_weight > 0.0) || !(h.tracking_weight > 0.0)) {
      throw ValidationError("household " + std::to_string(h.household_id) +
                            ": weights must be strictly positive");
    }
    data.design.village(h.village_id);  // referenced village must exist
  }
  for (const auto& ind : data.individuals) {
    if (ind.age_months < 0.0) {
      throw ValidationError("individual " + std::to_string(ind.individual_id) +
                            ": negative age");
    }
    if (ind.role == Role::ChildU6 && ind.age_months >= 72.0) {
      throw ValidationError("individual " + std::to_string(ind.individual_id) +
                            ": under-six role with baseline age >= 72 months");
    }
  }
  auto counts = data.design.arm_counts();
  std::array<int, kNumArms> eligible{}, ineligible{};
  for (const auto& h : data.households) {
    int a = static_cast<int>(data.design.village(h.village_id).arm);
    (h.stratum == Stratum::Eligible ? eligible : ineligible)[a]++;
  }
  CsvTable t;
  t.columns = {"arm", "villages", "eligible_households", "ineligible_households"};
  log << "arm counts (villages / eligible / ineligible):\n";
  for (int a = 0; a < kNumArms; ++a) {
    t.rows.push_back({arm_name(static_cast<Arm>(a)), std::to_string(counts[a]),
                      std::to_string(eligible[a]),
                      std::to_string(ineligible[a])});
    log << "  " << arm_name(static_cast<Arm>(a)) << ": " << counts[a] << " / "
        << eligible[a] << " / " << ineligible[a] << "\n";
  }
  write_artifact(config.output_dir, "validation.csv", t, log);
}

void cmd_itt(const RunConfig& config, std::ostream& log) {
  require_ledger(config, "itt");
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);
  std::vector<std::pair<std::string, std::vector<std::string>>> selections;

  for (OutcomeFamily family : {OutcomeFamily::Primary, OutcomeFamily::Secondary}) {
    auto outcomes = outcomes_of_family(config, family);
    if (outcomes.empty()) continue;
    std::vector<EstimateTableRow> rows;
    for (const auto& outcome : outcomes) {
      IttResult result = itt(ctx, outcome);
      rows.push_back(row_from_itt(ctx, outcome.name, result, true));
      selections.emplace_back(outcome.name, result.selected_controls);
    }
    attach_qvalues(rows);
    write_artifact(config.output_dir,
                   std::string("itt_") + family_suffix(family) + ".csv",
                   estimate_table({"gikuriro", "gd_main", "gd_large"},
                                  {"p_bcr_gd_eq_gdl", "p_bcr_gk_eq_gdl"}, rows),
                   log);
  }
  write_artifact(config.output_dir, "selected_controls.csv",
                 selection_manifest_csv(selections), log);

  if (config.itt_granular) {
    std::vector<EstimateTableRow> rows;
    for (const auto& outcome : config.outcomes) {
      IttOptions opts;
      opts.granular = true;
      IttResult result = itt(ctx, outcome, opts);
      rows.push_back(row_from_itt(ctx, outcome.name, result, false));
    }
    attach_qvalues(rows);
    write_artifact(
        config.output_dir, "itt_granular.csv",
        estimate_table({"gikuriro", "gd_lower", "gd_middle", "gd_upper",
                        "gd_large"},
                       {}, rows),
        log);
  }

  if (config.itt_ipw_covariates) {
    std::vector<EstimateTableRow> rows;
    for (const auto& outcome : config.outcomes) {
      auto mult = remain_ipw_multipliers(ctx, outcome, *config.itt_ipw_covariates);
      IttOptions opts;
      opts.ipw_multiplier = &mult;
      IttResult result = itt(ctx, outcome, opts);
      rows.push_back(row_from_itt(ctx, outcome.name, result, false));
    }
    attach_qvalues(rows);
    write_artifact(config.output_dir, "itt_ipw.csv",
                   estimate_table({"gikuriro", "gd_main", "gd_large"}, {}, rows),
                   log);
  }
}

void cmd_ce(const RunConfig& config, const RunOverrides& overrides,
            std::ostream& log) {
  require_ledger(config, "ce");
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);

  std::vector<CeVariant> variants = config.ce_variants;
  if (overrides.variant) variants = {ce_variant_from_name(*overrides.variant)};

  for (OutcomeFamily family : {OutcomeFamily::Primary, OutcomeFamily::Secondary}) {
    auto outcomes = outcomes_of_family(config, family);
    if (outcomes.empty()) continue;

    std::vector<CeTableRow> rows;
    std::map<std::string, std::vector<CostEquivalentResult>> robustness;
    std::vector<std::string> outcome_names;
    for (const auto& outcome : outcomes) {
      outcome_names.push_back(outcome.name);
      AnalysisFrame frame =
          build_analysis_frame(data, outcome, WeightMode::EligibleITT);
      for (CeVariant variant : variants) {
        CostEquivalentResult result = cost_equivalent(ctx, outcome, variant);
        if (variant == CeVariant::Linear) {
          CeTableRow row;
          row.outcome = outcome.name;
          row.result = result;
          row.control_mean = weighted_control_mean(frame);
          row.n = result.fit.n;
          row.r2 = result.fit.r2;
          rows.push_back(std::move(row));
        }
        robustness[outcome.name].push_back(std::move(result));
      }
    }
    // Within-table q-values over the three reported coefficients.
    if (!rows.empty()) {
      std::vector<double> pvals;
      for (const auto& row : rows) {
        pvals.push_back(row.result.gikuriro_differential_p);
        pvals.push_back(row.result.fit.pvalue(kAnyTreatment));
        pvals.push_back(row.result.slope_dropped
                            ? 1.0
                            : row.result.fit.pvalue(kTauPer100));
      }
      std::vector<double> qvals = sharpened_q(pvals);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].qvalues = {qvals[3 * i], qvals[3 * i + 1], qvals[3 * i + 2]};
      }
      write_artifact(config.output_dir,
                     std::string("ce_") + family_suffix(family) + ".csv",
                     ce_table(rows), log);
    }
    if (variants.size() > 1) {
      write_artifact(config.output_dir,
                     std::string("ce_robustness_") + family_suffix(family) +
                         ".csv",
                     ce_robustness_table(outcome_names, robustness), log);
    }
  }
}

void cmd_tce(const RunConfig& config, std::ostream& log) {
  require_ledger(config, "tce");
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);
  for (OutcomeFamily family : {OutcomeFamily::Primary, OutcomeFamily::Secondary}) {
    auto outcomes = outcomes_of_family(config, family);
    if (outcomes.empty()) continue;
    std::vector<EstimateTableRow> rows;
    std::vector<CeTableRow> ce_rows;
    for (const auto& outcome : outcomes) {
      IttResult result = tce(ctx, outcome);
      rows.push_back(row_from_itt(ctx, outcome.name, result, true));
      CostEquivalentResult ce_result = benchmarked_tce(ctx, outcome);
      CeTableRow ce_row;
      ce_row.outcome = outcome.name;
      ce_row.control_mean = result.control_mean;
      ce_row.n = ce_result.fit.n;
      ce_row.r2 = ce_result.fit.r2;
      ce_row.result = std::move(ce_result);
      ce_rows.push_back(std::move(ce_row));
    }
    attach_qvalues(rows);
    write_artifact(config.output_dir,
                   std::string("tce_") + family_suffix(family) + ".csv",
                   estimate_table({"gikuriro", "gd_main", "gd_large"},
                                  {"p_bcr_gd_eq_gdl", "p_bcr_gk_eq_gdl"}, rows),
                   log);
    std::vector<double> pvals;
    for (const auto& row : ce_rows) {
      pvals.push_back(row.result.gikuriro_differential_p);
      pvals.push_back(row.result.fit.pvalue(kAnyTreatment));
      pvals.push_back(row.result.slope_dropped ? 1.0
                                               : row.result.fit.pvalue(kTauPer100));
    }
    std::vector<double> qvals = sharpened_q(pvals);
    for (std::size_t i = 0; i < ce_rows.size(); ++i) {
      ce_rows[i].qvalues = {qvals[3 * i], qvals[3 * i + 1], qvals[3 * i + 2]};
    }
    write_artifact(config.output_dir,
                   std::string("ce_tce_") + family_suffix(family) + ".csv",
                   ce_table(ce_rows), log);
  }
}

void cmd_bcr(const RunConfig& config, std::ostream& log) {
  require_ledger(config, "bcr");
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);
  for (OutcomeFamily family : {OutcomeFamily::Primary, OutcomeFamily::Secondary}) {
    auto outcomes = outcomes_of_family(config, family);
    if (outcomes.empty()) continue;
    write_artifact(config.output_dir,
                   std::string("bcr_") + family_suffix(family) + ".csv",
                   bcr_csv(bcr_table(ctx, outcomes)), log);
  }
}

void cmd_spillover(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);
  for (OutcomeFamily family : {OutcomeFamily::Primary, OutcomeFamily::Secondary}) {
    auto outcomes = outcomes_of_family(config, family);
    if (outcomes.empty()) continue;
    std::vector<EstimateTableRow> rows;
    for (const auto& outcome : outcomes) {
      IttResult result = spillover(ctx, outcome);
      rows.push_back(row_from_itt(ctx, outcome.name, result, false));
    }
    attach_qvalues(rows);
    write_artifact(config.output_dir,
                   std::string("spillovers_") + family_suffix(family) + ".csv",
                   estimate_table({"gd_main_village", "gd_large_village"}, {},
                                  rows),
                   log);
  }
}

void cmd_modality(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);
  for (OutcomeFamily family : {OutcomeFamily::Primary, OutcomeFamily::Secondary}) {
    auto outcomes = outcomes_of_family(config, family);
    if (outcomes.empty()) continue;
    std::vector<EstimateTableRow> rows;
    for (const auto& outcome : outcomes) {
      LumpsumFlowResult result = lumpsum_flow(ctx, outcome);
      EstimateTableRow row;
      row.outcome = outcome.name;
      for (const char* name : {"t_main_cell", "t_main_x_lumpsum", "t_large",
                               "t_large_x_lumpsum"}) {
        int idx = result.fit.index_of(name);
        row.coefficients.push_back(result.fit.beta[idx]);
        row.ses.push_back(result.fit.se(idx));
        row.pvalues.push_back(result.fit.pvalue(idx));
      }
      row.n = result.fit.n;
      row.r2 = result.fit.r2;
      row.extra = {result.total_main_lumpsum.p, result.total_large_lumpsum.p};
      rows.push_back(std::move(row));
    }
    attach_qvalues(rows);
    write_artifact(
        config.output_dir,
        std::string("lumpsum_flow_") + family_suffix(family) + ".csv",
        estimate_table({"main_cell", "main_x_lumpsum", "large",
                        "large_x_lumpsum"},
                       {"p_total_main_lumpsum", "p_total_large_lumpsum"}, rows),
        log);
  }
}

void cmd_choice(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);
  for (OutcomeFamily family : {OutcomeFamily::Primary, OutcomeFamily::Secondary}) {
    auto outcomes = outcomes_of_family(config, family);
    if (outcomes.empty()) continue;
    std::vector<EstimateTableRow> rows;
    for (const auto& outcome : outcomes) {
      IttResult result = choice_effect(ctx, outcome);
      rows.push_back(row_from_itt(ctx, outcome.name, result, false));
    }
    attach_qvalues(rows);
    write_artifact(config.output_dir,
                   std::string("choice_") + family_suffix(family) + ".csv",
                   estimate_table({"chose_lumpsum", "assigned_lumpsum",
                                   "got_what_wanted"},
                                  {}, rows),
                   log);
  }
}

void cmd_hetero(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);
  if (config.hetero_moderators.empty()) {
    throw ValidationError("hetero: no moderators configured");
  }
  std::vector<OutcomeSpec> outcomes = config.outcomes;
  if (!config.hetero_outcome.empty()) {
    outcomes.clear();
    for (const auto& o : config.outcomes) {
      if (o.name == config.hetero_outcome) outcomes.push_back(o);
    }
    if (outcomes.empty()) {
      throw ValidationError("hetero: outcome '" + config.hetero_outcome +
                            "' is not configured");
    }
  }
  for (Moderator moderator : config.hetero_moderators) {
    CsvTable t;
    t.columns = {"outcome"};
    bool have_columns = false;
    for (const auto& outcome : outcomes) {
      HeterogeneityResult result =
          prespecified_heterogeneity(ctx, outcome, moderator);
      if (!have_columns) {
        for (const auto& name : result.interaction_names) {
          t.columns.push_back("coef_" + name);
          t.columns.push_back("se_" + name);
        }
        t.columns.push_back("p_interactions_equal");
        t.columns.push_back("n");
        have_columns = true;
      }
      std::vector<std::string> row{outcome.name};
      for (const auto& name : result.interaction_names) {
        int idx = result.fit.index_of(name);
        row.push_back(format_double(result.fit.beta[idx]));
        row.push_back("(" + format_double(result.fit.se(idx)) + ")");
      }
      row.push_back(format_double(result.interactions_equal.p));
      row.push_back(std::to_string(result.fit.n));
      t.rows.push_back(std::move(row));
    }
    write_artifact(config.output_dir,
                   std::string("het_") + moderator_name(moderator) + ".csv", t,
                   log);
  }
}

struct ForestPipelineResult {
  std::vector<std::string> labels;            // reported outcome dimensions
  std::vector<Eigen::VectorXd> cates;         // on the common sample
  std::vector<int> sample_household_ids;
  Eigen::MatrixXd correlations;
  TargetingReport targeting;
  std::map<std::string, std::vector<std::pair<double, double>>> cdfs;
};

// Cash-vs-in-kind CATEs: restrict to the Gikuriro and GD-Main arms,
// standardize outcomes to the control distribution, residualize on the ITT
// control set, fit one honest forest per outcome, and evaluate every model
// on the common household sample.
ForestPipelineResult run_forest_pipeline(const RunConfig& config,
                                         const Dataset& data,
                                         std::ostream& log) {
  if (config.forest_outcomes.empty() && config.child_growth_components.empty()) {
    throw ValidationError("forest: no outcomes configured");
  }
  EstimatorContext ctx = make_context(config, data);

  // Common prediction sample: eligible households in the two-arm subset.
  std::vector<const HouseholdRow*> sample;
  for (const auto& h : data.households) {
    if (h.stratum != Stratum::Eligible) continue;
    Arm arm = data.design.village(h.village_id).arm;
    if (arm != Arm::Gikuriro && arm != Arm::GdLower && arm != Arm::GdMiddle &&
        arm != Arm::GdUpper) {
      continue;
    }
    sample.push_back(&h);
  }
  if (sample.empty()) throw EstimationError("forest: two-arm sample is empty");

  // Moderators: the household covariates shared by the whole sample.
  std::vector<std::string> moderators;
  {
    std::map<std::string, std::size_t> seen;
    for (const auto* h : sample) {
      for (const auto& [k, _] : h->covariates) seen[k]++;
    }
    for (const auto& [k, count] : seen) {
      if (count == sample.size()) moderators.push_back(k);
    }
  }
  Eigen::MatrixXd sample_x(sample.size(), moderators.size());
  for (std::size_t i = 0; i < sample.size(); ++i) {
    for (std::size_t j = 0; j < moderators.size(); ++j) {
      sample_x(i, j) = sample[i]->covariates.at(moderators[j]);
    }
  }

  auto fit_one = [&](const OutcomeSpec& outcome,
                     std::uint64_t seed) -> Eigen::VectorXd {
    AnalysisFrame full =
        build_analysis_frame(data, outcome, WeightMode::EligibleITT);
    // Standardize to the control group's endline distribution.
    double c_mean = weighted_control_mean(full);
    double c_sd = weighted_control_sd(full);
    if (c_sd <= 0.0) {
      throw EstimationError("forest: outcome '" + outcome.name +
                            "' has no control-group variance");
    }
    std::vector<long> keep;
    for (long i = 0; i < full.n(); ++i) {
      if (full.arm[i] == Arm::Gikuriro || full.arm[i] == Arm::GdLower ||
          full.arm[i] == Arm::GdMiddle || full.arm[i] == Arm::GdUpper) {
        keep.push_back(i);
      }
    }
    AnalysisFrame frame = subset_frame(full, keep);
    Eigen::VectorXd y = (frame.outcome.array() - c_mean) / c_sd;
    Eigen::VectorXd treat =
        arm_indicator(frame, {Arm::GdLower, Arm::GdMiddle, Arm::GdUpper});

    // Controls: the ITT always-keep set.
    std::vector<std::string> control_names;
    std::vector<long> control_idx;
    for (std::size_t j = 0; j < frame.covariate_names.size(); ++j) {
      control_names.push_back(frame.covariate_names[j]);
      control_idx.push_back(static_cast<long>(j));
    }
    Eigen::MatrixXd controls(frame.n(), control_idx.size() +
                                            (frame.has_lagged ? 1 : 0));
    for (std::size_t j = 0; j < control_idx.size(); ++j) {
      controls.col(static_cast<long>(j)) = frame.covariates.col(control_idx[j]);
    }
    if (frame.has_lagged) {
      controls.col(static_cast<long>(control_idx.size())) = frame.lagged;
      control_names.push_back("lagged_outcome");
    }

    Residualized res =
        residualize(y, treat, controls, control_names, frame.block,
                    frame.weight, frame.village);
    ResidualizedData rd;
    rd.outcome_res = res.outcome_res;
    rd.treatment_res = res.treatment_res;
    rd.treatment_binary = treat;
    rd.weights = frame.weight;
    rd.moderator_names = moderators;
    rd.moderators.resize(frame.n(), static_cast<long>(moderators.size()));
    std::map<int, const HouseholdRow*> households;
    for (const auto& h : data.households) households[h.household_id] = &h;
    for (long i = 0; i < frame.n(); ++i) {
      const HouseholdRow* h = households.at(frame.household_id[i]);
      for (std::size_t j = 0; j < moderators.size(); ++j) {
        rd.moderators(i, static_cast<long>(j)) = h->covariates.at(moderators[j]);
      }
    }
    ForestConfig fc = config.forest;
    fc.seed = seed;
    fc.threads = config.threads;
    CateModel model = fit_forest(rd, fc);
    log << "forest: " << outcome.name << " fitted with " << fc.n_trees
        << " trees on " << frame.n() << " rows\n";
    return model.predict(sample_x);
  };

  ForestPipelineResult result;
  std::uint64_t seed_cursor = config.seed;
  for (const auto& name : config.forest_outcomes) {
    const OutcomeSpec* spec = nullptr;
    for (const auto& o : config.outcomes) {
      if (o.name == name) spec = &o;
    }
    if (!spec) throw ValidationError("forest outcome '" + name + "' not configured");
    result.labels.push_back(name);
    result.cates.push_back(fit_one(*spec, ++seed_cursor));
  }
  if (!config.child_growth_components.empty()) {
    std::vector<Eigen::VectorXd> parts;
    for (const auto& name : config.child_growth_components) {
      const OutcomeSpec* spec = nullptr;
      for (const auto& o : config.outcomes) {
        if (o.name == name) spec = &o;
      }
      if (!spec) {
        throw ValidationError("child growth component '" + name +
                              "' not configured");
      }
      parts.push_back(fit_one(*spec, ++seed_cursor));
    }
    result.labels.push_back("child_growth");
    result.cates.push_back(standardized_index(parts));
  }

  for (const auto* h : sample) {
    result.sample_household_ids.push_back(h->household_id);
  }
  // Correlations optionally use subgroup-averaged effects; targeting stays
  // on the per-row predictions.
  std::vector<Eigen::VectorXd> corr_inputs = result.cates;
  if (config.forest_subgroup_quantiles > 0) {
    for (auto& c : corr_inputs) {
      c = subgroup_average_predictions(c, config.forest_subgroup_quantiles);
    }
  }
  result.correlations = cross_outcome_correlation(corr_inputs);
  result.targeting = targeting_gains(result.cates);
  for (std::size_t k = 0; k < result.labels.size(); ++k) {
    result.cdfs[result.labels[k]] = cate_cdf(result.cates[k]);
  }
  return result;
}

void cmd_forest(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  ForestPipelineResult result = run_forest_pipeline(config, data, log);

  CsvTable predictions;
  predictions.columns = {"household_id"};
  for (const auto& label : result.labels) {
    predictions.columns.push_back("cate_" + label);
  }
  for (std::size_t i = 0; i < result.sample_household_ids.size(); ++i) {
    std::vector<std::string> row{std::to_string(result.sample_household_ids[i])};
    for (const auto& cate : result.cates) {
      row.push_back(format_double(cate[static_cast<long>(i)]));
    }
    predictions.rows.push_back(std::move(row));
  }
  write_artifact(config.output_dir, "cate_predictions.csv", predictions, log);
  write_artifact(config.output_dir, "cate_correlations.csv",
                 correlation_csv(result.labels, result.correlations), log);
  write_artifact(config.output_dir, "targeting_gains.csv",
                 targeting_csv(result.labels, result.targeting), log);
  write_artifact(config.output_dir, "cate_cdf.csv", cdf_csv(result.cdfs), log);
}

void cmd_attrition(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);
  CsvTable t;
  t.columns = {"level",        "covariates",  "coef_gikuriro", "se_gikuriro",
               "coef_gd_main", "se_gd_main",  "coef_gd_large", "se_gd_large",
               "control_mean", "n",           "r2"};
  for (AttritionLevel level :
       {AttritionLevel::Household, AttritionLevel::Roster,
        AttritionLevel::Anthro, AttritionLevel::Anemia,
        AttritionLevel::NewMember}) {
    for (bool with_covariates : {false, true}) {
      AttritionOptions opts = config.attrition_options;
      opts.with_covariates = with_covariates;
      IttResult result;
      try {
        result = attrition_regression(ctx, level, opts);
      } catch (const EstimationError& e) {
        log << "attrition " << attrition_level_name(level) << ": " << e.what()
            << "\n";
        continue;
      }
      std::vector<std::string> row{attrition_level_name(level),
                                   with_covariates ? "yes" : "no"};
      for (const char* name : {kGikuriro, kGdMain, kGdLarge}) {
        int idx = result.fit.index_of(name);
        row.push_back(format_double(result.fit.beta[idx]));
        row.push_back("(" + format_double(result.fit.se(idx)) + ")");
      }
      row.push_back(format_double(result.control_mean));
      row.push_back(std::to_string(result.fit.n));
      row.push_back(format_double(result.fit.r2));
      t.rows.push_back(std::move(row));
    }
  }
  write_artifact(config.output_dir, "attrition.csv", t, log);
}

void cmd_simulate(const RunConfig& config, std::ostream& log) {
  if (!config.dgp) throw ValidationError("simulate requires a dgp config");
  SimData sim = generate(*config.dgp, config.seed);
  write_dataset_csv(sim.data, config.output_dir + "/dataset");
  log << "simulated " << sim.data.households.size() << " households in "
      << sim.data.design.villages.size() << " villages\n";

  if (config.mc) {
    McOptions options;
    options.threads = config.threads;
    McReport report = monte_carlo(*config.dgp, config.mc->descriptor,
                                  config.mc->reps, config.seed, options);
    write_artifact(config.output_dir, "mc_report.csv",
                   mc_report_csv("mc", report), log);
    std::string summary;
    summary += "replications: " + std::to_string(report.completed_reps) + " (" +
               std::to_string(report.failures) + " failures)\n";
    summary += "mean estimate: " + format_double(report.mean_estimate) + "\n";
    summary += "bias vs truth: " + format_double(report.bias) + "\n";
    summary += "sd of estimates: " + format_double(report.sd_estimate) + "\n";
    summary +=
        "mean reported se: " + format_double(report.mean_reported_se) + "\n";
    summary += "95% CI coverage: " + format_double(report.coverage95) + "\n";
    summary += "rejection rate at truth (size): " +
               format_double(report.reject_rate_at_true) + "\n";
    summary += "rejection rate at zero (power): " +
               format_double(report.reject_rate_at_zero) + "\n";
    write_text_artifact(config.output_dir, "mc_summary.txt", summary, log);
    log << "monte carlo wall clock: " << report.wallclock_seconds << " s\n";
  }
}

void cmd_power(const RunConfig& config, std::ostream& log) {
  require_ledger(config, "power");
  if (!config.dgp) throw ValidationError("power requires a dgp config");
  McOptions options;
  options.threads = config.threads;
  PowerStudyResult result = interpolation_power_study(
      *config.dgp, config.power_reps, config.seed, options);
  write_artifact(config.output_dir, "power_study.csv",
                 power_study_csv(result), log);
  log << "cubic/linear variance ratio: analytic "
      << result.analytic_ratio_vs_linear[2] << ", mc "
      << result.mc_ratio_vs_linear[2]
      << " (benchmark 2.58, a 158% sample-size equivalent)\n";
}

void cmd_report(const RunConfig& config, std::ostream& log) {
  Dataset data = load_dataset(config);
  EstimatorContext ctx = make_context(config, data);

  // Assigned vs actual transfers, one box per GD arm.
  {
    std::map<Arm, std::vector<double>> actual;
    std::map<Arm, double> assigned;
    for (const auto& h : data.households) {
      auto it = h.covariates.find("transfer_usd");
      if (it == h.covariates.end()) continue;
      const Village& v = data.design.village(h.village_id);
      if (!is_gd_arm(v.arm)) continue;
      actual[v.arm].push_back(it->second);
      if (v.assigned_transfer) assigned[v.arm] = *v.assigned_transfer;
    }
    std::vector<BoxStats> boxes;
    for (const auto& [arm, values] : actual) {
      std::vector<double> v = values;
      std::sort(v.begin(), v.end());
      BoxStats b;
      b.label = arm_name(arm);
      b.assigned = assigned.count(arm) ? assigned[arm] : 0.0;
      b.q1 = quantile_type7(v, 0.25);
      b.median = quantile_type7(v, 0.5);
      b.q3 = quantile_type7(v, 0.75);
      b.whisker_lo = v.front();
      b.whisker_hi = v.back();
      boxes.push_back(b);
    }
    if (!boxes.empty()) {
      write_text_artifact(config.output_dir, "transfers_box_whisker.svg",
                          svg_box_whisker(boxes, "Assigned and realized transfers"),
                          log);
    }
  }

  // Cost-equivalence vs cost-effectiveness panels for one outcome.
  if (!config.report.ce_outcome.empty()) {
    require_ledger(config, "report");
    const OutcomeSpec* spec = nullptr;
    for (const auto& o : config.outcomes) {
      if (o.name == config.report.ce_outcome) spec = &o;
    }
    if (!spec) {
      throw ValidationError("report: ce_outcome '" + config.report.ce_outcome +
                            "' not configured");
    }
    AnalysisFrame frame =
        build_analysis_frame(data, *spec, WeightMode::EligibleITT);
    auto arm_mean = [&](std::initializer_list<Arm> arms) {
      KahanSum num, den;
      for (long i = 0; i < frame.n(); ++i) {
        for (Arm a : arms) {
          if (frame.arm[i] == a) {
            num.add(frame.weight[i] * frame.outcome[i]);
            den.add(frame.weight[i]);
          }
        }
      }
      return den.value() > 0 ? num.value() / den.value() : 0.0;
    };
    double benchmark = config.benchmark_override.value_or(
        default_benchmark(config.ledger));
    std::vector<ArmPoint> points;
    points.push_back({"control", 0.0, arm_mean({Arm::Control}), false});
    points.push_back({"gikuriro",
                      cost_per_eligible(config.ledger.require(Arm::Gikuriro)),
                      arm_mean({Arm::Gikuriro}), false});
    for (Arm arm : {Arm::GdLower, Arm::GdMiddle, Arm::GdUpper, Arm::GdLarge}) {
      points.push_back({arm_name(arm),
                        cost_per_eligible(config.ledger.require(arm)),
                        arm_mean({arm}), true});
    }
    CostEquivalentResult ce_fit =
        cost_equivalent(ctx, *spec, CeVariant::Linear);
    double predicted = arm_mean({Arm::Control}) + ce_fit.cash_at_benchmark;
    write_text_artifact(
        config.output_dir, "cost_equivalence.svg",
        svg_cost_equivalence(points, benchmark, predicted, spec->name), log);
  }

  // Dietary-diversity style bar chart: control share plus ITT effects.
  if (!config.report.diet_outcomes.empty()) {
    require_ledger(config, "report");
    std::vector<std::string> groups;
    std::vector<std::vector<double>> shares;
    std::vector<std::string> arm_labels = {"control", "gikuriro", "gd_main",
                                           "gd_large"};
    for (const auto& name : config.report.diet_outcomes) {
      const OutcomeSpec* spec = nullptr;
      for (const auto& o : config.outcomes) {
        if (o.name == name) spec = &o;
      }
      if (!spec) {
        throw ValidationError("report: diet outcome '" + name +
                              "' not configured");
      }
      IttResult fit = itt(ctx, *spec);
      double base = fit.control_mean;
      groups.push_back(name);
      shares.push_back({base, base + fit.fit.coef(kGikuriro),
                        base + fit.fit.coef(kGdMain),
                        base + fit.fit.coef(kGdLarge)});
    }
    write_text_artifact(
        config.output_dir, "dietary_diversity.svg",
        svg_bar_chart(groups, arm_labels, shares,
                      "Share of households consuming each food group"),
        log);
  }

  // CATE CDFs.
  if (!config.forest_outcomes.empty() || !config.child_growth_components.empty()) {
    ForestPipelineResult forest_result = run_forest_pipeline(config, data, log);
    write_text_artifact(config.output_dir, "cate_cdfs.svg",
                        svg_cdf_curves(forest_result.cdfs,
                                       "CDFs of predicted cash-vs-kind CATEs"),
                        log);
  }
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "validate", "itt",    "ce",      "tce",      "bcr",
      "spillover", "modality", "choice", "hetero",  "forest",
      "attrition", "simulate", "power",  "report"};
  return names;
}

void run_command(const std::string& command, RunConfig config,
                 const RunOverrides& overrides, std::ostream& log) {
  if (overrides.seed) config.seed = *overrides.seed;
  if (overrides.output_dir) config.output_dir = *overrides.output_dir;
  if (overrides.threads) config.threads = *overrides.threads;

  if (command == "validate") {
    cmd_validate(config, log);
  } else if (command == "itt") {
    cmd_itt(config, log);
  } else if (command == "ce") {
    cmd_ce(config, overrides, log);
  } else if (command == "tce") {
    cmd_tce(config, log);
  } else if (command == "bcr") {
    cmd_bcr(config, log);
  } else if (command == "spillover") {
    cmd_spillover(config, log);
  } else if (command == "modality") {
    cmd_modality(config, log);
  } else if (command == "choice") {
    cmd_choice(config, log);
  } else if (command == "hetero") {
    cmd_hetero(config, log);
  } else if (command == "forest") {
    cmd_forest(config, log);
  } else if (command == "attrition") {
    cmd_attrition(config, log);
  } else if (command == "simulate") {
    cmd_simulate(config, log);
  } else if (command == "power") {
    cmd_power(config, log);
  } else if (command == "report") {
    cmd_report(config, log);
  } else {
    throw ValidationError("unknown command '" + command + "'");
  }
}

}  // namespace cashbench
