#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "qtp/error.hpp"
#include "qtp/scenario.hpp"

namespace {

enum Exit { Ok = 0, Schema = 2, Numerical = 3, Resource = 4 };

int fail(int code, const std::string& what) {
  std::cerr << "qtp: " << what << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detection probabilities for free scalar fields"};
  app.require_subcommand(1);

  std::string config, out_dir, golden;
  int threads = 0;
  double tolerance_scale = 1.0;
  bool update_golden = false;
  auto* run = app.add_subcommand("run", "Execute a scenario");
  run->add_option("--config", config, "Scenario JSON file")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--threads", threads, "Worker threads (overrides numerics.threads)")->check(CLI::PositiveNumber);
  run->add_option("--tolerance-scale", tolerance_scale, "Multiplies every oracle tolerance")->check(CLI::PositiveNumber);
  run->add_option("--golden", golden, "Directory of golden oracle files");
  run->add_flag("--update-golden", update_golden, "Rewrite the golden file for this scenario");

  std::string run_a, run_b;
  double tolerance = 1e-12;
  auto* compare = app.add_subcommand("compare", "Compare the grids of two runs");
  compare->add_option("first", run_a, "Run directory")->required();
  compare->add_option("second", run_b, "Reference run directory")->required();
  compare->add_option("--tolerance", tolerance, "Maximum relative deviation");

  std::string schema_out;
  auto* schema = app.add_subcommand("schema", "Print the scenario JSON schema");
  schema->add_option("--out", schema_out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Ok : Schema;
  }

  try {
    if (*run) {
      const qtp::Scenario s = qtp::load_scenario(config);
      qtp::RunOptions opt;
      opt.out_dir = out_dir;
      opt.threads = threads;
      opt.tolerance_scale = tolerance_scale;
      if (!golden.empty()) opt.golden_dir = golden;
      opt.update_golden = update_golden;
      const auto manifest = qtp::run_scenario(s, opt);
      std::cout << s.name << " " << s.hash << " -> " << out_dir << " (" << manifest.at("files").size() << " files)\n";
      return Ok;
    }
    if (*compare) {
      bool ok = true;
      for (const auto& c : qtp::compare_runs(run_a, run_b, tolerance)) {
        std::printf("%-12s %.3e %s\n", c.name.c_str(), c.max_relative_deviation, c.pass ? "ok" : "FAIL");
        ok = ok && c.pass;
      }
      return ok ? Ok : Numerical;
    }
    if (*schema) {
      if (schema_out.empty()) {
        std::cout << qtp::scenario_schema();
      } else {
        std::ofstream f(schema_out);
        if (!f) return fail(Resource, "cannot write " + schema_out);
        f << qtp::scenario_schema();
      }
      return Ok;
    }
  } catch (const qtp::InvalidInput& e) {
    return fail(Schema, e.what());
  } catch (const qtp::NumericalError& e) {
    return fail(Numerical, e.what());
  } catch (const qtp::ToleranceFailure& e) {
    return fail(Numerical, std::string("tolerance: ") + e.what());
  } catch (const qtp::ResourceError& e) {
    return fail(Resource, e.what());
  } catch (const std::bad_alloc&) {
    return fail(Resource, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(Resource, e.what());
  }
  return Ok;
}
