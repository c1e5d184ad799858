#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cashbench/config.hpp"
#include "cashbench/errors.hpp"
#include "cashbench/runner.hpp"
#include "cashbench/svg.hpp"
#include "cashbench/tables.hpp"
#include "doctest.h"

using namespace cashbench;
namespace fs = std::filesystem;

namespace {

const char* kDgpConfig = R"({
  "schema_version": 1,
  "seed": 12,
  "output_dir": "OUTDIR",
  "ledger": "reference",
  "dgp": {
    "reference_design": false,
    "villages_per_arm": 6,
    "eligible_per_village": 8,
    "ineligible_per_village": 4,
    "attrition": false,
    "outcomes": [
      {"name": "cons", "effect": {"kind": "linear_in_cost",
        "cash_at_benchmark": 0.15, "slope_per_100": 0.05,
        "gikuriro_offset": -0.1}},
      {"name": "savings", "family": "secondary",
       "effect": {"kind": "constant", "arm_effects": [0, 0.5, 0, 0, 0, 0.2]}}
    ]
  },
  "outcomes": [
    {"name": "cons", "family": "primary"},
    {"name": "savings", "family": "secondary"}
  ],
  "lasso_controls": false
})";

std::string config_with_out(const std::string& dir) {
  std::string cfg = kDgpConfig;
  auto pos = cfg.find("OUTDIR");
  cfg.replace(pos, 6, dir);
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown config keys are rejected") {
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version":1,"turbo":true})"),
                    ValidationError);
    CHECK_THROWS_AS(
        parse_run_config(
            R"({"schema_version":1,"dgp":{"outcomes":[{"name":"y"}],"typo_key":1}})"),
        ValidationError);
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version":7})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_run_config("not json"), ValidationError);
  }

  TEST_CASE("exactly one of data and dgp is required") {
    CHECK_THROWS_AS(parse_run_config(R"({"schema_version":1})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_run_config(R"({
      "schema_version": 1,
      "dgp": {"outcomes": [{"name": "y"}]},
      "data": {"villages": "v.csv", "households": "h.csv"}
    })"),
                    ValidationError);
  }

  TEST_CASE("estimate tables round-trip at full precision") {
    EstimateTableRow row;
    row.outcome = "cons";
    row.coefficients = {0.123456789012345678, -1.0 / 3.0, 2e-17};
    row.ses = {0.01, 0.2, 3.5};
    row.qvalues = {0.05, 0.07, 1.0};
    row.pvalues = {0.01, 0.02, 0.9};
    row.control_mean = 10.69;
    row.control_sd = 1.34;
    row.n = 1750;
    row.r2 = 0.14;
    row.extra = {0.93, 0.04};
    CsvTable t = estimate_table({"gk", "gd", "gdl"}, {"p_a", "p_b"}, {row});
    CsvTable back = parse_csv(to_csv_string(t));
    REQUIRE(back.rows.size() == 1);
    CHECK(parse_table_cell(back.rows[0][1]) == row.coefficients[0]);
    CHECK(parse_table_cell(back.rows[0][2]) == row.ses[0]);
    CHECK(parse_table_cell(back.rows[0][3]) == row.qvalues[0]);
    CHECK(parse_table_cell(back.rows[0][4]) == row.coefficients[1]);
    CHECK(parse_table_cell(back.rows[0][7]) == row.coefficients[2]);
    CHECK(parse_table_cell(back.rows[0][back.columns.size() - 1]) == 0.04);
  }

  TEST_CASE("empty result set emits a header-only file") {
    CsvTable t = estimate_table({"gk"}, {}, {});
    std::string text = to_csv_string(t);
    CHECK(text ==
          "outcome,coef_gk,se_gk,q_gk,control_mean,control_sd,n,r2\n");
  }

  TEST_CASE("column order is pinned") {
    // Golden header: downstream parsers key on this exact layout.
    CsvTable t = estimate_table({"gikuriro", "gd_main", "gd_large"},
                                {"p_bcr_gd_eq_gdl", "p_bcr_gk_eq_gdl"}, {});
    std::string expected =
        "outcome,coef_gikuriro,se_gikuriro,q_gikuriro,coef_gd_main,se_gd_main,"
        "q_gd_main,coef_gd_large,se_gd_large,q_gd_large,control_mean,"
        "control_sd,n,r2,p_bcr_gd_eq_gdl,p_bcr_gk_eq_gdl";
    std::string header = to_csv_string(t);
    CHECK(header.substr(0, header.find('\n')) == expected);
  }

  TEST_CASE("every table layout has exactly one emitting command") {
    auto manifest = table_command_manifest();
    CHECK(!manifest.empty());
    std::set<std::string> known_commands(command_names().begin(),
                                         command_names().end());
    for (const auto& [table, command] : manifest) {
      CHECK(known_commands.count(command) == 1);
    }
    // Spot-check the published layouts stay covered.
    for (const char* table :
         {"itt_primary", "ce_primary", "ce_robustness_primary", "tce_primary",
          "ce_tce_primary", "bcr_primary", "spillovers_primary",
          "lumpsum_flow_primary", "choice_primary", "cate_correlations",
          "targeting_gains", "attrition"}) {
      CHECK(manifest.count(table) == 1);
    }
  }

  TEST_CASE("validate and itt run end to end from a dgp config") {
    TempDir dir("cashbench_cli_itt");
    RunConfig config = parse_run_config(config_with_out(dir.path.string()));
    std::ostringstream log;
    run_command("validate", config, {}, log);
    CHECK(fs::exists(dir.path / "validation.csv"));
    run_command("itt", config, {}, log);
    CHECK(fs::exists(dir.path / "itt_primary.csv"));
    CHECK(fs::exists(dir.path / "itt_secondary.csv"));
    CHECK(fs::exists(dir.path / "selected_controls.csv"));
    CsvTable t = read_csv((dir.path / "itt_primary.csv").string());
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0][0] == "cons");
  }

  TEST_CASE("ce without a cost ledger is a config error") {
    TempDir dir("cashbench_cli_noledger");
    std::string cfg = config_with_out(dir.path.string());
    auto pos = cfg.find("\"ledger\": \"reference\",");
    cfg.erase(pos, std::string("\"ledger\": \"reference\",").size());
    RunConfig config = parse_run_config(cfg);
    std::ostringstream log;
    CHECK_THROWS_AS(run_command("ce", config, {}, log), ValidationError);
  }

  TEST_CASE("simulate is byte-deterministic under a fixed seed") {
    TempDir a("cashbench_sim_a");
    TempDir b("cashbench_sim_b");
    RunConfig config = parse_run_config(config_with_out(a.path.string()));
    std::ostringstream log;
    run_command("simulate", config, {}, log);
    RunOverrides to_b;
    to_b.output_dir = b.path.string();
    run_command("simulate", config, to_b, log);
    for (const char* name : {"villages.csv", "households.csv", "individuals.csv"}) {
      CHECK(slurp((a.path / "dataset" / name).string()) ==
            slurp((b.path / "dataset" / name).string()));
    }
    // A different seed changes the bytes.
    TempDir c("cashbench_sim_c");
    RunOverrides differently;
    differently.output_dir = c.path.string();
    differently.seed = 999;
    run_command("simulate", config, differently, log);
    CHECK(slurp((a.path / "dataset" / "households.csv").string()) !=
          slurp((c.path / "dataset" / "households.csv").string()));
  }

  TEST_CASE("simulated datasets reload through the csv path unchanged") {
    TempDir dir("cashbench_roundtrip");
    RunConfig config = parse_run_config(config_with_out(dir.path.string()));
    std::ostringstream log;
    run_command("simulate", config, {}, log);

    RunConfig file_config = config;
    file_config.dgp.reset();
    DataFilesConfig files;
    files.villages = (dir.path / "dataset" / "villages.csv").string();
    files.households = (dir.path / "dataset" / "households.csv").string();
    files.individuals = (dir.path / "dataset" / "individuals.csv").string();
    file_config.data = files;

    Dataset from_dgp = load_dataset(config);
    Dataset from_files = load_dataset(file_config);
    REQUIRE(from_files.households.size() == from_dgp.households.size());

    EstimatorContext ctx_a, ctx_b;
    ctx_a.data = &from_dgp;
    ctx_b.data = &from_files;
    ctx_a.ledger = ctx_b.ledger = config.ledger;
    ctx_a.lasso_controls = ctx_b.lasso_controls = false;
    OutcomeSpec outcome;
    outcome.name = "cons";
    double a = itt(ctx_a, outcome).fit.coef(kGdLarge);
    double b = itt(ctx_b, outcome).fit.coef(kGdLarge);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
  }

  TEST_CASE("ce and tables run deterministically end to end") {
    TempDir a("cashbench_ce_a");
    TempDir b("cashbench_ce_b");
    RunConfig config = parse_run_config(config_with_out(a.path.string()));
    std::ostringstream log;
    run_command("ce", config, {}, log);
    RunOverrides to_b;
    to_b.output_dir = b.path.string();
    run_command("ce", config, to_b, log);
    for (const char* name : {"ce_primary.csv", "ce_robustness_primary.csv"}) {
      CHECK(slurp((a.path / name).string()) == slurp((b.path / name).string()));
    }
  }

  TEST_CASE("variant override narrows the ce run") {
    TempDir dir("cashbench_ce_variant");
    RunConfig config = parse_run_config(config_with_out(dir.path.string()));
    RunOverrides overrides;
    overrides.variant = "linear";
    std::ostringstream log;
    run_command("ce", config, overrides, log);
    CHECK(fs::exists(dir.path / "ce_primary.csv"));
    CHECK(!fs::exists(dir.path / "ce_robustness_primary.csv"));
  }

  TEST_CASE("report emits deterministic figures") {
    TempDir a("cashbench_report_a");
    TempDir b("cashbench_report_b");
    std::string cfg = config_with_out(a.path.string());
    // Add the figure configuration.
    auto pos = cfg.rfind("\"lasso_controls\": false");
    cfg.insert(pos, R"("report": {"ce_outcome": "cons", "diet_outcomes": ["savings"]},
  )");
    RunConfig config = parse_run_config(cfg);
    std::ostringstream log;
    run_command("report", config, {}, log);
    CHECK(fs::exists(a.path / "transfers_box_whisker.svg"));
    CHECK(fs::exists(a.path / "cost_equivalence.svg"));
    CHECK(fs::exists(a.path / "dietary_diversity.svg"));
    RunOverrides to_b;
    to_b.output_dir = b.path.string();
    run_command("report", config, to_b, log);
    for (const char* name :
         {"transfers_box_whisker.svg", "cost_equivalence.svg",
          "dietary_diversity.svg"}) {
      CHECK(slurp((a.path / name).string()) == slurp((b.path / name).string()));
    }
    std::string svg = slurp((a.path / "cost_equivalence.svg").string());
    CHECK(svg.find("<svg") == 0);
  }

  TEST_CASE("mc summary artifacts carry no wall-clock noise") {
    TempDir a("cashbench_mc_a");
    TempDir b("cashbench_mc_b");
    std::string cfg = config_with_out(a.path.string());
    auto pos = cfg.rfind("\"lasso_controls\": false");
    cfg.insert(pos, R"("mc": {"estimator": "itt", "outcome": "cons",
    "target": "t_gd_large", "true_value": 0.0, "reps": 30},
  )");
    RunConfig config = parse_run_config(cfg);
    std::ostringstream log;
    run_command("simulate", config, {}, log);
    RunOverrides to_b;
    to_b.output_dir = b.path.string();
    run_command("simulate", config, to_b, log);
    CHECK(slurp((a.path / "mc_report.csv").string()) ==
          slurp((b.path / "mc_report.csv").string()));
    CHECK(slurp((a.path / "mc_summary.txt").string()) ==
          slurp((b.path / "mc_summary.txt").string()));
  }

  TEST_CASE("remaining analysis commands emit their tables") {
    TempDir dir("cashbench_cli_all");
    std::string cfg = config_with_out(dir.path.string());
    auto pos = cfg.rfind("\"lasso_controls\": false");
    cfg.insert(pos, R"("estimators": {
      "hetero": {"moderators": ["impatient", "baseline_anthro"]},
      "forest": {"trees": 60, "min_rows": 150, "outcomes": ["cons"],
                 "subgroup_quantiles": 4}
    },
  )");
    RunConfig config = parse_run_config(cfg);
    std::ostringstream log;
    run_command("tce", config, {}, log);
    CHECK(fs::exists(dir.path / "tce_primary.csv"));
    CHECK(fs::exists(dir.path / "ce_tce_primary.csv"));
    run_command("bcr", config, {}, log);
    CHECK(fs::exists(dir.path / "bcr_primary.csv"));
    CHECK(fs::exists(dir.path / "bcr_secondary.csv"));
    run_command("spillover", config, {}, log);
    CHECK(fs::exists(dir.path / "spillovers_primary.csv"));
    run_command("modality", config, {}, log);
    CHECK(fs::exists(dir.path / "lumpsum_flow_primary.csv"));
    run_command("choice", config, {}, log);
    CHECK(fs::exists(dir.path / "choice_primary.csv"));
    run_command("hetero", config, {}, log);
    CHECK(fs::exists(dir.path / "het_impatient.csv"));
    CHECK(fs::exists(dir.path / "het_baseline_anthro.csv"));
    run_command("forest", config, {}, log);
    CHECK(fs::exists(dir.path / "cate_predictions.csv"));
    CHECK(fs::exists(dir.path / "cate_correlations.csv"));
    CHECK(fs::exists(dir.path / "targeting_gains.csv"));
    CHECK(fs::exists(dir.path / "cate_cdf.csv"));

    // Attrition needs an attriting dgp.
    std::string attr_cfg = cfg;
    auto apos = attr_cfg.find("\"attrition\": false");
    attr_cfg.replace(apos, std::strlen("\"attrition\": false"),
                     "\"attrition\": true");
    RunConfig attr_config = parse_run_config(attr_cfg);
    run_command("attrition", attr_config, {}, log);
    CHECK(fs::exists(dir.path / "attrition.csv"));
  }

  TEST_CASE("power command reports the variance ordering") {
    TempDir dir("cashbench_cli_power");
    std::string cfg = config_with_out(dir.path.string());
    auto pos = cfg.rfind("\"lasso_controls\": false");
    cfg.insert(pos, "\"power_reps\": 120,\n  ");
    RunConfig config = parse_run_config(cfg);
    std::ostringstream log;
    run_command("power", config, {}, log);
    CHECK(fs::exists(dir.path / "power_study.csv"));
    CsvTable t = read_csv((dir.path / "power_study.csv").string());
    REQUIRE(t.rows.size() == 7);
    int ratio_col = t.require_column("analytic_ratio_vs_linear");
    CHECK(parse_table_cell(t.rows[2][ratio_col]) > 1.0);  // cubic row
  }

  TEST_CASE("itt ipw variant writes the corrected table") {
    TempDir dir("cashbench_cli_ipw");
    std::string cfg = config_with_out(dir.path.string());
    auto apos = cfg.find("\"attrition\": false");
    cfg.replace(apos, std::strlen("\"attrition\": false"), "\"attrition\": true");
    auto pos = cfg.rfind("\"lasso_controls\": false");
    cfg.insert(pos, R"("estimators": {"itt": {"granular": true,
      "ipw_covariates": ["x1", "x2"]}},
  )");
    RunConfig config = parse_run_config(cfg);
    std::ostringstream log;
    run_command("itt", config, {}, log);
    CHECK(fs::exists(dir.path / "itt_ipw.csv"));
    CHECK(fs::exists(dir.path / "itt_granular.csv"));
  }

  TEST_CASE("column mapping renames file headers") {
    TempDir dir("cashbench_colmap");
    // Canonical files from simulate, then rename two household columns.
    RunConfig config = parse_run_config(config_with_out(dir.path.string()));
    std::ostringstream log;
    run_command("simulate", config, {}, log);
    CsvTable households =
        read_csv((dir.path / "dataset" / "households.csv").string());
    households.columns[households.require_column("id")] = "hh_code";
    households.columns[households.require_column("sampling_weight")] = "wgt";
    write_csv((dir.path / "dataset" / "households_renamed.csv").string(),
              households);

    RunConfig file_config = config;
    file_config.dgp.reset();
    DataFilesConfig files;
    files.villages = (dir.path / "dataset" / "villages.csv").string();
    files.households = (dir.path / "dataset" / "households_renamed.csv").string();
    files.columns = {{"id", "hh_code"}, {"sampling_weight", "wgt"}};
    file_config.data = files;
    Dataset data = load_dataset(file_config);
    CHECK(data.households.size() == 432);  // 36 villages x 12 households
    // Without the mapping the required column is missing.
    file_config.data->columns.clear();
    CHECK_THROWS(load_dataset(file_config));
  }

  TEST_CASE("bcr table layout survives a csv round trip") {
    BcrRow row;
    row.outcome = "consumption";
    row.bcr_gikuriro = -0.0923456789012345;
    row.bcr_gd_main = 0.066;
    row.bcr_gd_large = 0.058;
    row.se_gikuriro = 0.077;
    row.se_gd_main = 0.1;
    row.se_gd_large = 0.021;
    row.p_gk_vs_main = 0.05;
    row.p_main_vs_large = 0.93;
    row.p_gk_vs_large = 0.04;
    CsvTable t = bcr_csv({row});
    CsvTable back = parse_csv(to_csv_string(t));
    CHECK(parse_table_cell(back.rows[0][1]) == row.bcr_gikuriro);
    CHECK(parse_table_cell(back.rows[0][2]) == row.se_gikuriro);
    CHECK(parse_table_cell(back.rows[0][9]) == row.p_gk_vs_large);
  }

  TEST_CASE("unknown command is rejected") {
    RunConfig config = parse_run_config(config_with_out("/tmp/unused"));
    std::ostringstream log;
    CHECK_THROWS_AS(run_command("frobnicate", config, {}, log), ValidationError);
  }

  TEST_CASE("svg helpers produce well-formed deterministic markup") {
    std::vector<BoxStats> boxes = {{"gd_lower", 41.32, 30, 40, 52, 20, 70}};
    std::string box = svg_box_whisker(boxes, "transfers");
    CHECK(box.find("<svg") == 0);
    CHECK(box.rfind("</svg>\n") == box.size() - 7);
    CHECK(box == svg_box_whisker(boxes, "transfers"));

    std::map<std::string, std::vector<std::pair<double, double>>> curves;
    curves["cons"] = {{-0.2, 0.25}, {0.0, 0.5}, {0.3, 1.0}};
    std::string cdf = svg_cdf_curves(curves, "cdfs");
    CHECK(cdf.find("polyline") != std::string::npos);
  }
}
