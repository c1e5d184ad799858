#include "cashbench/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "cashbench/csv.hpp"
#include "cashbench/errors.hpp"

namespace cashbench {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) {
      throw ValidationError("config: unknown key '" + key + "' in " + where);
    }
  }
}

Transform parse_transform(const json& spec, const std::string& where) {
  Transform t;
  std::string kind = spec.value("transform", "none");
  double lo = spec.value("winsor_lo", 0.01);
  double hi = spec.value("winsor_hi", 0.99);
  t.lo = lo;
  t.hi = hi;
  if (kind == "none") {
    t.kind = Transform::Kind::None;
  } else if (kind == "ihs") {
    t.kind = Transform::Kind::Ihs;
  } else if (kind == "winsorize") {
    t.kind = Transform::Kind::Winsorize;
  } else if (kind == "winsorize_then_ihs") {
    t.kind = Transform::Kind::WinsorizeThenIhs;
  } else {
    throw ValidationError("config: unknown transform '" + kind + "' in " + where);
  }
  return t;
}

OutcomeSpec parse_outcome_spec(const json& o, const std::string& where) {
  check_keys(o,
             {"name", "level", "family", "transform", "winsor_lo", "winsor_hi",
              "role", "max_age_months", "min_age_months"},
             where);
  OutcomeSpec spec;
  spec.name = o.at("name").get<std::string>();
  std::string level = o.value("level", "household");
  if (level == "household") {
    spec.level = OutcomeLevel::Household;
  } else if (level == "individual") {
    spec.level = OutcomeLevel::Individual;
  } else {
    throw ValidationError("config: unknown level '" + level + "' in " + where);
  }
  std::string family = o.value("family", "primary");
  spec.family = family == "secondary" ? OutcomeFamily::Secondary
                                      : OutcomeFamily::Primary;
  spec.transform = parse_transform(o, where);
  if (o.contains("role")) {
    std::string role = o.at("role").get<std::string>();
    if (role == "child_u6") {
      spec.subpop.role = Role::ChildU6;
    } else if (role == "woman_childbearing") {
      spec.subpop.role = Role::WomanChildbearing;
    } else if (role == "other") {
      spec.subpop.role = Role::OtherMember;
    } else {
      throw ValidationError("config: unknown role '" + role + "' in " + where);
    }
  }
  if (o.contains("max_age_months")) {
    spec.subpop.max_age_months = o.at("max_age_months").get<double>();
  }
  if (o.contains("min_age_months")) {
    spec.subpop.min_age_months = o.at("min_age_months").get<double>();
  }
  return spec;
}

EffectSpec parse_effect(const json& e, const std::string& where) {
  check_keys(e,
             {"kind", "arm_effects", "cash_at_benchmark", "slope_per_100",
              "gikuriro_offset", "moderator", "step_base", "step_size",
              "step_threshold", "lumpsum_bonus", "matched_choice_bonus",
              "compliers_only", "gd_ineligible_spillover"},
             where);
  EffectSpec effect;
  std::string kind = e.value("kind", "constant");
  if (kind == "constant") {
    effect.kind = EffectSpec::Kind::Constant;
    if (e.contains("arm_effects")) {
      auto arr = e.at("arm_effects");
      if (arr.size() != kNumArms) {
        throw ValidationError("config: arm_effects needs 6 entries in " + where);
      }
      for (int a = 0; a < kNumArms; ++a) effect.arm_effect[a] = arr[a].get<double>();
    }
  } else if (kind == "linear_in_cost") {
    effect.kind = EffectSpec::Kind::LinearInCost;
  } else if (kind == "moderator_step") {
    effect.kind = EffectSpec::Kind::ModeratorStep;
  } else {
    throw ValidationError("config: unknown effect kind '" + kind + "' in " + where);
  }
  effect.cash_at_benchmark = e.value("cash_at_benchmark", 0.0);
  effect.slope_per_100 = e.value("slope_per_100", 0.0);
  effect.gikuriro_offset = e.value("gikuriro_offset", 0.0);
  effect.moderator = e.value("moderator", "x1");
  effect.step_base = e.value("step_base", 0.0);
  effect.step_size = e.value("step_size", 0.0);
  effect.step_threshold = e.value("step_threshold", 0.0);
  effect.lumpsum_bonus = e.value("lumpsum_bonus", 0.0);
  effect.matched_choice_bonus = e.value("matched_choice_bonus", 0.0);
  effect.compliers_only = e.value("compliers_only", false);
  effect.gd_ineligible_spillover = e.value("gd_ineligible_spillover", 0.0);
  return effect;
}

DgpSpec parse_dgp(const json& d) {
  check_keys(d,
             {"reference_design", "villages_per_arm", "eligible_per_village",
              "ineligible_per_village", "icc", "noise_sd", "n_covariates",
              "attrition", "individuals", "outcomes", "choice_lumpsum_rate",
              "constant_weights"},
             "dgp");
  DgpSpec spec;
  bool reference = d.value("reference_design", true);
  if (!reference) {
    spec = DgpSpec::small(d.value("villages_per_arm", 4),
                          d.value("eligible_per_village", 8),
                          d.value("ineligible_per_village", 4));
  }
  spec.icc = d.value("icc", spec.icc);
  spec.noise_sd = d.value("noise_sd", spec.noise_sd);
  spec.n_covariates = d.value("n_covariates", spec.n_covariates);
  spec.attrition_enabled = d.value("attrition", true);
  spec.generate_individuals = d.value("individuals", false);
  spec.choice_lumpsum_rate = d.value("choice_lumpsum_rate", spec.choice_lumpsum_rate);
  spec.constant_weights = d.value("constant_weights", false);
  if (!d.contains("outcomes") || d.at("outcomes").empty()) {
    throw ValidationError("config: dgp.outcomes must not be empty");
  }
  for (const auto& o : d.at("outcomes")) {
    check_keys(o,
               {"name", "level", "family", "binary", "baseline_mean",
                "endline_mean", "rho", "effect"},
               "dgp.outcomes");
    OutcomeDgp dgp;
    dgp.name = o.at("name").get<std::string>();
    dgp.level = o.value("level", std::string("household")) == "individual"
                    ? OutcomeLevel::Individual
                    : OutcomeLevel::Household;
    dgp.family = o.value("family", std::string("primary")) == "secondary"
                     ? OutcomeFamily::Secondary
                     : OutcomeFamily::Primary;
    dgp.binary = o.value("binary", false);
    dgp.baseline_mean = o.value("baseline_mean", 0.0);
    dgp.endline_mean = o.value("endline_mean", 0.0);
    dgp.rho = o.value("rho", 0.3);
    if (o.contains("effect")) dgp.effect = parse_effect(o.at("effect"), dgp.name);
    spec.outcomes.push_back(std::move(dgp));
  }
  for (const auto& o : spec.outcomes) {
    if (o.level == OutcomeLevel::Individual) spec.generate_individuals = true;
  }
  return spec;
}

CostLedgerSet parse_ledger(const json& l) {
  if (l.is_string()) {
    if (l.get<std::string>() == "reference") return CostLedgerSet::reference();
    throw ValidationError("config: ledger must be 'reference' or a list");
  }
  CostLedgerSet set;
  for (const auto& row : l) {
    check_keys(row,
               {"arm", "cost_per_beneficiary", "averted_share",
                "compliance_eligible", "compliance_population"},
               "ledger");
    ArmCostLedger ledger;
    ledger.arm = arm_from_name(row.at("arm").get<std::string>());
    ledger.cost_per_beneficiary = row.at("cost_per_beneficiary").get<double>();
    ledger.averted_share = row.at("averted_share").get<double>();
    ledger.compliance_eligible = row.at("compliance_eligible").get<double>();
    ledger.compliance_population = row.value("compliance_population", 0.0);
    ledger.validate();
    set.arms.push_back(ledger);
  }
  return set;
}

Moderator moderator_from_name(const std::string& name) {
  for (int m = 0; m <= static_cast<int>(Moderator::LackOtherControl); ++m) {
    if (name == moderator_name(static_cast<Moderator>(m))) {
      return static_cast<Moderator>(m);
    }
  }
  throw ValidationError("config: unknown moderator '" + name + "'");
}

EstimatorDescriptor::Kind estimator_kind_from_name(const std::string& name) {
  using Kind = EstimatorDescriptor::Kind;
  if (name == "itt") return Kind::Itt;
  if (name == "ce") return Kind::CostEquivalent;
  if (name == "tce") return Kind::Tce;
  if (name == "benchmarked_tce") return Kind::BenchmarkedTce;
  if (name == "spillover") return Kind::Spillover;
  if (name == "attrition") return Kind::AttritionReg;
  if (name == "modality") return Kind::LumpsumFlow;
  if (name == "choice") return Kind::Choice;
  if (name == "itt_ipw") return Kind::IttIpw;
  if (name == "bcr_equality") return Kind::BcrEqualityTest;
  throw ValidationError("config: unknown mc estimator '" + name + "'");
}

}  // namespace

const std::string& DataFilesConfig::resolve(const std::string& canonical) const {
  auto it = columns.find(canonical);
  // Village/individual id columns default to plain "id" in their own files.
  if (it == columns.end() && (canonical == "village_id" || canonical == "individual_id")) {
    static const std::string kId = "id";
    return kId;
  }
  return it == columns.end() ? canonical : it->second;
}

RunConfig parse_run_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const std::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  check_keys(root,
             {"schema_version", "seed", "output_dir", "threads", "dgp", "data",
              "ledger", "benchmark_override", "outcomes", "lasso_controls",
              "lasso", "always_keep", "cluster_level", "propensity_floor",
              "estimators", "mc", "power_reps", "report"},
             "top level");
  RunConfig cfg;
  cfg.schema_version = root.value("schema_version", 1);
  if (cfg.schema_version != 1) {
    throw ValidationError("config: unsupported schema_version " +
                          std::to_string(cfg.schema_version));
  }
  cfg.seed = root.value("seed", 0ull);
  cfg.output_dir = root.value("output_dir", std::string("out"));
  cfg.threads = root.value("threads", 0);

  if (root.contains("dgp")) cfg.dgp = parse_dgp(root.at("dgp"));
  if (root.contains("data")) {
    const auto& d = root.at("data");
    check_keys(d, {"villages", "households", "individuals", "covariates",
                   "columns"},
               "data");
    DataFilesConfig files;
    files.villages = d.at("villages").get<std::string>();
    files.households = d.at("households").get<std::string>();
    files.individuals = d.value("individuals", std::string());
    if (d.contains("covariates")) {
      for (const auto& c : d.at("covariates")) {
        files.covariates.push_back(c.get<std::string>());
      }
    }
    if (d.contains("columns")) {
      for (const auto& [canonical, actual] : d.at("columns").items()) {
        files.columns[canonical] = actual.get<std::string>();
      }
    }
    cfg.data = files;
  }
  if (cfg.dgp.has_value() == cfg.data.has_value()) {
    throw ValidationError(
        "config: exactly one of 'data' and 'dgp' must be present");
  }

  if (root.contains("ledger")) {
    cfg.ledger = parse_ledger(root.at("ledger"));
    cfg.ledger_provided = true;
  }
  if (cfg.dgp && cfg.ledger_provided) cfg.dgp->ledger = cfg.ledger;
  if (root.contains("benchmark_override") &&
      !root.at("benchmark_override").is_null()) {
    cfg.benchmark_override = root.at("benchmark_override").get<double>();
  }
  if (root.contains("outcomes")) {
    for (const auto& o : root.at("outcomes")) {
      cfg.outcomes.push_back(parse_outcome_spec(o, "outcomes"));
    }
  }
  cfg.lasso_controls = root.value("lasso_controls", true);
  if (root.contains("lasso")) {
    const auto& l = root.at("lasso");
    check_keys(l, {"c", "loading_iterations", "weights_in_loadings"}, "lasso");
    cfg.lasso.c = l.value("c", cfg.lasso.c);
    cfg.lasso.loading_iterations =
        l.value("loading_iterations", cfg.lasso.loading_iterations);
    cfg.lasso.weights_in_loadings =
        l.value("weights_in_loadings", cfg.lasso.weights_in_loadings);
  }
  if (root.contains("cluster_level")) {
    std::string level = root.at("cluster_level").get<std::string>();
    if (level == "village") {
      cfg.cluster_level = ClusterLevel::Village;
    } else if (level == "household") {
      cfg.cluster_level = ClusterLevel::Household;
    } else {
      throw ValidationError("config: unknown cluster_level '" + level + "'");
    }
  }
  cfg.propensity_floor = root.value("propensity_floor", cfg.propensity_floor);
  if (root.contains("always_keep")) {
    cfg.always_keep.clear();
    for (const auto& a : root.at("always_keep")) {
      cfg.always_keep.push_back(a.get<std::string>());
    }
  }

  if (root.contains("estimators")) {
    const auto& est = root.at("estimators");
    check_keys(est, {"itt", "ce", "hetero", "forest", "attrition"},
               "estimators");
    if (est.contains("itt")) {
      check_keys(est.at("itt"), {"granular", "ipw_covariates"}, "estimators.itt");
      cfg.itt_granular = est.at("itt").value("granular", false);
      if (est.at("itt").contains("ipw_covariates")) {
        std::vector<std::string> covs;
        for (const auto& c : est.at("itt").at("ipw_covariates")) {
          covs.push_back(c.get<std::string>());
        }
        cfg.itt_ipw_covariates = covs;
      }
    }
    if (est.contains("ce")) {
      check_keys(est.at("ce"), {"variants"}, "estimators.ce");
      if (est.at("ce").contains("variants")) {
        cfg.ce_variants.clear();
        for (const auto& v : est.at("ce").at("variants")) {
          cfg.ce_variants.push_back(ce_variant_from_name(v.get<std::string>()));
        }
      }
    }
    if (est.contains("hetero")) {
      check_keys(est.at("hetero"), {"moderators", "outcome"}, "estimators.hetero");
      for (const auto& m : est.at("hetero").at("moderators")) {
        cfg.hetero_moderators.push_back(moderator_from_name(m.get<std::string>()));
      }
      cfg.hetero_outcome = est.at("hetero").value("outcome", std::string());
    }
    if (est.contains("forest")) {
      const auto& f = est.at("forest");
      check_keys(f,
                 {"trees", "subsample_fraction", "honesty_fraction", "min_leaf",
                  "max_depth", "feature_fraction", "outcomes",
                  "child_growth_components", "min_rows", "subgroup_quantiles"},
                 "estimators.forest");
      cfg.forest.n_trees = f.value("trees", cfg.forest.n_trees);
      cfg.forest.subsample_fraction =
          f.value("subsample_fraction", cfg.forest.subsample_fraction);
      cfg.forest.honesty_fraction =
          f.value("honesty_fraction", cfg.forest.honesty_fraction);
      int min_leaf = f.value("min_leaf", cfg.forest.min_leaf_treated);
      cfg.forest.min_leaf_treated = min_leaf;
      cfg.forest.min_leaf_control = min_leaf;
      cfg.forest.max_depth = f.value("max_depth", cfg.forest.max_depth);
      cfg.forest.feature_fraction =
          f.value("feature_fraction", cfg.forest.feature_fraction);
      cfg.forest.min_rows = f.value("min_rows", cfg.forest.min_rows);
      cfg.forest_subgroup_quantiles =
          f.value("subgroup_quantiles", cfg.forest_subgroup_quantiles);
      if (f.contains("outcomes")) {
        for (const auto& o : f.at("outcomes")) {
          cfg.forest_outcomes.push_back(o.get<std::string>());
        }
      }
      if (f.contains("child_growth_components")) {
        for (const auto& o : f.at("child_growth_components")) {
          cfg.child_growth_components.push_back(o.get<std::string>());
        }
      }
    }
    if (est.contains("attrition")) {
      check_keys(est.at("attrition"), {"anthro_outcome", "anemia_outcome"},
                 "estimators.attrition");
      cfg.attrition_options.anthro_outcome =
          est.at("attrition").value("anthro_outcome", std::string("haz"));
      cfg.attrition_options.anemia_outcome =
          est.at("attrition").value("anemia_outcome", std::string("anemia"));
    }
  }

  if (root.contains("mc")) {
    const auto& m = root.at("mc");
    check_keys(m,
               {"estimator", "outcome", "target", "true_value", "reps",
                "variant", "lasso_controls", "attrition_level",
                "ipw_covariates"},
               "mc");
    McJobConfig job;
    job.descriptor.kind =
        estimator_kind_from_name(m.at("estimator").get<std::string>());
    if (m.contains("outcome")) {
      std::string name = m.at("outcome").get<std::string>();
      job.descriptor.outcome.name = name;
      job.descriptor.outcome.transform.kind = Transform::Kind::None;
    }
    job.descriptor.target_coefficient = m.value("target", std::string(kGdLarge));
    job.descriptor.true_value = m.value("true_value", 0.0);
    job.descriptor.lasso_controls = m.value("lasso_controls", false);
    if (m.contains("variant")) {
      job.descriptor.variant =
          ce_variant_from_name(m.at("variant").get<std::string>());
    }
    if (m.contains("attrition_level")) {
      std::string level = m.at("attrition_level").get<std::string>();
      bool found = false;
      for (int l = 0; l <= static_cast<int>(AttritionLevel::NewMember); ++l) {
        if (level == attrition_level_name(static_cast<AttritionLevel>(l))) {
          job.descriptor.attrition_level = static_cast<AttritionLevel>(l);
          found = true;
        }
      }
      if (!found) {
        throw ValidationError("config: unknown attrition level '" + level + "'");
      }
    }
    if (m.contains("ipw_covariates")) {
      for (const auto& c : m.at("ipw_covariates")) {
        job.descriptor.ipw_covariates.push_back(c.get<std::string>());
      }
    }
    job.reps = m.value("reps", 200);
    cfg.mc = job;
  }
  cfg.power_reps = root.value("power_reps", 1000);

  if (root.contains("report")) {
    const auto& r = root.at("report");
    check_keys(r, {"diet_outcomes", "ce_outcome"}, "report");
    if (r.contains("diet_outcomes")) {
      for (const auto& o : r.at("diet_outcomes")) {
        cfg.report.diet_outcomes.push_back(o.get<std::string>());
      }
    }
    cfg.report.ce_outcome = r.value("ce_outcome", std::string());
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ValidationError("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

namespace {

Role role_from_name(const std::string& name) {
  if (name == "child_u6") return Role::ChildU6;
  if (name == "woman_childbearing") return Role::WomanChildbearing;
  if (name == "other") return Role::OtherMember;
  throw ValidationError("unknown role '" + name + "' in individuals file");
}

const char* role_name(Role role) {
  switch (role) {
    case Role::ChildU6: return "child_u6";
    case Role::WomanChildbearing: return "woman_childbearing";
    case Role::OtherMember: return "other";
  }
  return "?";
}

Dataset load_dataset_from_files(const RunConfig& config) {
  const DataFilesConfig& files = *config.data;
  Dataset data;

  CsvTable villages = read_csv(files.villages);
  int v_id = villages.require_column(files.resolve("village_id"));
  int v_block = villages.require_column(files.resolve("block"));
  int v_arm = villages.require_column(files.resolve("arm"));
  int v_transfer = villages.column_index(files.resolve("assigned_transfer"));
  std::set<int> blocks;
  for (const auto& row : villages.rows) {
    Village v;
    v.id = static_cast<int>(std::stol(row[v_id]));
    v.block = static_cast<int>(std::stol(row[v_block]));
    v.arm = arm_from_name(row[v_arm]);
    double t = 0.0;
    if (v_transfer >= 0 && parse_double_field(row[v_transfer], t)) {
      v.assigned_transfer = t;
    }
    blocks.insert(v.block);
    data.design.villages.push_back(v);
  }
  data.design.blocks.assign(blocks.begin(), blocks.end());

  CsvTable households = read_csv(files.households);
  const std::set<std::string> known = {
      "id",      "village",        "stratum", "sampling_weight",
      "tracking_weight", "complied", "ubudehe", "members",
      "chose_lumpsum",   "assigned_lumpsum", "in_choice_arm"};
  int h_id = households.require_column(files.resolve("id"));
  int h_village = households.require_column(files.resolve("village"));
  int h_stratum = households.require_column(files.resolve("stratum"));
  int h_sw = households.require_column(files.resolve("sampling_weight"));
  int h_tw = households.column_index(files.resolve("tracking_weight"));
  int h_complied = households.column_index(files.resolve("complied"));
  int h_ubudehe = households.column_index(files.resolve("ubudehe"));
  int h_members = households.column_index(files.resolve("members"));
  int h_chose = households.column_index(files.resolve("chose_lumpsum"));
  int h_assigned = households.column_index(files.resolve("assigned_lumpsum"));
  int h_choice_arm = households.column_index(files.resolve("in_choice_arm"));

  // Outcome columns follow the <name>_baseline / <name>_endline convention.
  std::map<std::string, std::pair<int, int>> outcome_cols;
  std::set<int> outcome_col_idx;
  for (const auto& spec : config.outcomes) {
    if (spec.level != OutcomeLevel::Household) continue;
    int b = households.column_index(spec.name + "_baseline");
    int e = households.column_index(spec.name + "_endline");
    if (e < 0) {
      throw ValidationError("households file lacks column '" + spec.name +
                            "_endline'");
    }
    outcome_cols[spec.name] = {b, e};
    if (b >= 0) outcome_col_idx.insert(b);
    outcome_col_idx.insert(e);
  }

  std::vector<std::pair<std::string, int>> covariate_cols;
  if (!files.covariates.empty()) {
    for (const auto& name : files.covariates) {
      covariate_cols.emplace_back(name, households.require_column(name));
    }
  } else {
    for (std::size_t j = 0; j < households.columns.size(); ++j) {
      const std::string& name = households.columns[j];
      if (known.count(name) || outcome_col_idx.count(static_cast<int>(j))) {
        continue;
      }
      covariate_cols.emplace_back(name, static_cast<int>(j));
    }
  }

  for (const auto& row : households.rows) {
    HouseholdRow h;
    h.household_id = static_cast<int>(std::stol(row[h_id]));
    h.village_id = static_cast<int>(std::stol(row[h_village]));
    h.stratum = row[h_stratum] == "eligible" ? Stratum::Eligible
                                             : Stratum::Ineligible;
    parse_double_field(row[h_sw], h.sampling_weight);
    h.tracking_weight = 1.0;
    if (h_tw >= 0) parse_double_field(row[h_tw], h.tracking_weight);
    if (h_complied >= 0 && !row[h_complied].empty()) {
      h.complied = row[h_complied] == "1";
    }
    if (h_ubudehe >= 0 && !row[h_ubudehe].empty()) {
      h.ubudehe = static_cast<int>(std::stol(row[h_ubudehe]));
    }
    if (h_members >= 0 && !row[h_members].empty()) {
      h.members = static_cast<int>(std::stol(row[h_members]));
    }
    bool has_choice = h_chose >= 0 && !row[h_chose].empty();
    if (has_choice) {
      ChoiceRecord choice;
      choice.chose_lump_sum = row[h_chose] == "1";
      if (h_assigned >= 0 && !row[h_assigned].empty()) {
        choice.assigned = row[h_assigned] == "1" ? Modality::LumpSum
                                                 : Modality::Flow;
      }
      if (h_choice_arm >= 0 && !row[h_choice_arm].empty()) {
        choice.in_choice_arm = row[h_choice_arm] == "1";
      }
      h.choice = choice;
    }
    for (const auto& [name, col] : covariate_cols) {
      double v = 0.0;
      if (parse_double_field(row[col], v)) h.covariates[name] = v;
    }
    for (const auto& [name, cols] : outcome_cols) {
      double v = 0.0;
      if (cols.first >= 0 && parse_double_field(row[cols.first], v)) {
        h.outcomes[{name, Round::Baseline}] = v;
      }
      if (parse_double_field(row[cols.second], v)) {
        h.outcomes[{name, Round::Endline}] = v;
      }
    }
    data.households.push_back(std::move(h));
  }

  if (!files.individuals.empty()) {
    CsvTable individuals = read_csv(files.individuals);
    int i_id = individuals.require_column(files.resolve("individual_id"));
    int i_hh = individuals.require_column(files.resolve("household"));
    int i_role = individuals.require_column(files.resolve("role"));
    int i_female = individuals.column_index(files.resolve("female"));
    int i_age = individuals.require_column(files.resolve("age_months"));
    std::map<std::string, std::pair<int, int>> ind_outcome_cols;
    for (const auto& spec : config.outcomes) {
      if (spec.level != OutcomeLevel::Individual) continue;
      int b = individuals.column_index(spec.name + "_baseline");
      int e = individuals.column_index(spec.name + "_endline");
      if (e < 0) {
        throw ValidationError("individuals file lacks column '" + spec.name +
                              "_endline'");
      }
      ind_outcome_cols[spec.name] = {b, e};
    }
    for (const auto& row : individuals.rows) {
      IndividualRow ind;
      ind.individual_id = static_cast<int>(std::stol(row[i_id]));
      ind.household_id = static_cast<int>(std::stol(row[i_hh]));
      ind.role = role_from_name(row[i_role]);
      if (i_female >= 0 && !row[i_female].empty()) {
        ind.female = row[i_female] == "1";
      }
      parse_double_field(row[i_age], ind.age_months);
      for (const auto& [name, cols] : ind_outcome_cols) {
        double v = 0.0;
        if (cols.first >= 0 && parse_double_field(row[cols.first], v)) {
          ind.outcomes[{name, Round::Baseline}] = v;
        }
        if (parse_double_field(row[cols.second], v)) {
          ind.outcomes[{name, Round::Endline}] = v;
        }
      }
      data.individuals.push_back(std::move(ind));
    }
  }
  data.design.validate();
  return data;
}

}  // namespace

Dataset load_dataset(const RunConfig& config) {
  if (config.data) return load_dataset_from_files(config);
  if (!config.dgp) {
    throw ValidationError("config: no data files and no dgp configured");
  }
  return generate(*config.dgp, config.seed).data;
}

void write_dataset_csv(const Dataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);

  CsvTable villages;
  villages.columns = {"id", "block", "arm", "assigned_transfer"};
  for (const auto& v : data.design.villages) {
    villages.rows.push_back(
        {std::to_string(v.id), std::to_string(v.block), arm_name(v.arm),
         v.assigned_transfer ? format_double(*v.assigned_transfer) : ""});
  }
  write_csv(dir + "/villages.csv", villages);

  // Column set = canonical fields + the union of covariate and outcome names.
  std::set<std::string> covariate_names;
  std::set<std::string> outcome_names;
  for (const auto& h : data.households) {
    for (const auto& [k, _] : h.covariates) covariate_names.insert(k);
    for (const auto& [k, _] : h.outcomes) outcome_names.insert(k.first);
  }
  CsvTable households;
  households.columns = {"id",      "village",        "stratum",
                        "sampling_weight", "tracking_weight", "complied",
                        "ubudehe", "members",        "chose_lumpsum",
                        "assigned_lumpsum", "in_choice_arm"};
  for (const auto& name : covariate_names) households.columns.push_back(name);
  for (const auto& name : outcome_names) {
    households.columns.push_back(name + "_baseline");
    households.columns.push_back(name + "_endline");
  }
  for (const auto& h : data.households) {
    std::vector<std::string> row = {
        std::to_string(h.household_id),
        std::to_string(h.village_id),
        h.stratum == Stratum::Eligible ? "eligible" : "ineligible",
        format_double(h.sampling_weight),
        format_double(h.tracking_weight),
        h.complied ? "1" : "0",
        std::to_string(h.ubudehe),
        std::to_string(h.members),
        h.choice ? (h.choice->chose_lump_sum ? "1" : "0") : "",
        h.choice ? (h.choice->assigned == Modality::LumpSum ? "1" : "0") : "",
        h.choice ? (h.choice->in_choice_arm ? "1" : "0") : ""};
    for (const auto& name : covariate_names) {
      auto it = h.covariates.find(name);
      row.push_back(it == h.covariates.end() ? "" : format_double(it->second));
    }
    for (const auto& name : outcome_names) {
      auto b = h.outcome(name, Round::Baseline);
      auto e = h.outcome(name, Round::Endline);
      row.push_back(b ? format_double(*b) : "");
      row.push_back(e ? format_double(*e) : "");
    }
    households.rows.push_back(std::move(row));
  }
  write_csv(dir + "/households.csv", households);

  std::set<std::string> ind_outcomes;
  for (const auto& ind : data.individuals) {
    for (const auto& [k, _] : ind.outcomes) ind_outcomes.insert(k.first);
  }
  CsvTable individuals;
  individuals.columns = {"id", "household", "role", "female", "age_months"};
  for (const auto& name : ind_outcomes) {
    individuals.columns.push_back(name + "_baseline");
    individuals.columns.push_back(name + "_endline");
  }
  for (const auto& ind : data.individuals) {
    std::vector<std::string> row = {
        std::to_string(ind.individual_id), std::to_string(ind.household_id),
        role_name(ind.role), ind.female ? "1" : "0",
        format_double(ind.age_months)};
    for (const auto& name : ind_outcomes) {
      auto b = ind.outcome(name, Round::Baseline);
      auto e = ind.outcome(name, Round::Endline);
      row.push_back(b ? format_double(*b) : "");
      row.push_back(e ? format_double(*e) : "");
    }
    individuals.rows.push_back(std::move(row));
  }
  write_csv(dir + "/individuals.csv", individuals);
}

}  // namespace cashbench
