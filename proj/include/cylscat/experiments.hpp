#pragma once

#include "cylscat/config.hpp"
#include "cylscat/report.hpp"

#include <functional>

namespace cylscat::experiments {

struct TaskResult {
  report::TaskOutcome outcome;
  // file name (relative to the run directory) -> bytes; written by the runner
  // after all tasks join, in declaration order, so reruns are byte-identical
  std::vector<std::pair<std::string, std::string>> files;
};

struct Task {
  std::string name;
  std::function<TaskResult()> run;
};

// expands a config into independent tasks; malformed parameters throw input_error
// here, before anything runs
std::vector<Task> build_tasks(const config::ExperimentConfig& cfg);

// runs the tasks (a worker pool when workers > 1), writes every declared file and
// the manifest under the run directory, and returns the manifest
report::RunManifest run_experiment(const config::ExperimentConfig& cfg, int workers = 1,
                                   const std::string& manifest_name = "manifest.json");

}  // namespace cylscat::experiments
