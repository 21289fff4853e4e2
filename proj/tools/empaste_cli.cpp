#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "empaste/empaste.h"

namespace {

int report_failure(const std::string& stage, int status) {
  std::cerr << "empaste: stage '" << stage << "' failed: " << empaste_status_name(status) << ": "
            << empaste_last_error() << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthesizes instance-segmentation datasets from image-level labels."};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::string out;
  app.add_option("--config", config, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed; overrides the config");
  app.add_option("--workers", workers, "Worker threads; overrides the config")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory; overrides the config");

  const char* stages[][2] = {
      {"extract", "Run F-EM and write the foreground manifest"},
      {"crops", "Write gray-padded classifier crops for every kept segment"},
      {"pool", "Assemble the background pool"},
      {"paste", "Composite foregrounds onto the pool and write COCO annotations"},
      {"longtail", "Subsample the extracted foregrounds to a Pareto long tail"},
      {"rewrite-captions", "Replace class words in captions with distractors"},
      {"validate", "Check the config, manifest and interchange files"},
      {"run", "extract, pool and paste in one go"},
  };
  for (const auto& s : stages) app.add_subcommand(s[0], s[1]);

  CLI11_PARSE(app, argc, argv);
  const std::string stage = app.get_subcommands().front()->get_name();

  empaste_pipeline* p = nullptr;
  int status = empaste_pipeline_open(config.c_str(), &p);
  if (status != EMPASTE_OK) return report_failure("config", status);
  if (seed) empaste_pipeline_set_seed(p, *seed);
  if (workers) empaste_pipeline_set_workers(p, *workers);
  if (!out.empty() && (status = empaste_pipeline_set_output_dir(p, out.c_str())) != EMPASTE_OK) {
    empaste_pipeline_close(p);
    return report_failure("config", status);
  }

  status = empaste_pipeline_run(p, stage.c_str());
  const std::string report = empaste_pipeline_report(p);
  if (!report.empty()) std::cout << report << '\n';
  int rc = 0;
  if (status != EMPASTE_OK) {
    const std::string failed = empaste_pipeline_failed_stage(p);
    rc = report_failure(failed.empty() ? stage : failed, status);
  }
  empaste_pipeline_close(p);
  return rc;
}
