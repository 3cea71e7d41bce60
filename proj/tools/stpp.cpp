#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "stpp/pipeline.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal point pattern analysis"};
  std::string task, config;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  stpp::RunOptions opts;
  std::string tasks;
  for (const auto& t : stpp::pipeline_tasks()) tasks += (tasks.empty() ? "" : ", ") + t;
  app.add_option("task", task, "One of: " + tasks)->required();
  app.add_option("--config", config, "JSON configuration file")->required();
  app.add_option("--seed", seed, "Override the configured seed");
  app.add_option("--threads", threads, "Worker threads (default: STPP_THREADS or all cores)");
  app.add_flag("--force", opts.force, "Write into a non-empty output directory");
  app.add_flag("--skip-bad", opts.skip_bad, "Skip malformed input rows instead of aborting");
  app.set_version_flag("--version", stpp::version);
  CLI11_PARSE(app, argc, argv);

  const auto& known = stpp::pipeline_tasks();
  if (std::find(known.begin(), known.end(), task) == known.end()) {
    std::cerr << "stpp: unknown task '" << task << "' (expected one of: " << tasks << ")\n";
    return 2;
  }
  try {
    auto cfg = stpp::PipelineConfig::load(config);
    if (seed) cfg.seed = *seed;
    if (threads > 0) stpp::set_thread_count(threads);
    stpp::run_pipeline(cfg, task, opts);
  } catch (const std::exception& e) {
    std::cerr << "stpp: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
