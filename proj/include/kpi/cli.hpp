#pragma once

#include <optional>
#include <string>

#include "kpi/config.hpp"

namespace kpi::cli {

struct Options {
  bool force = false;
  std::optional<std::uint64_t> seed;  // overrides config seed
};

int cmd_synth(const cfg::PipelineConfig& config, const Options& opt);
int cmd_build_kg(const cfg::PipelineConfig& config, const Options& opt);
int cmd_fuse(const cfg::PipelineConfig& config, const Options& opt);
int cmd_train(const cfg::PipelineConfig& config, const Options& opt);
int cmd_eval(const cfg::PipelineConfig& config, const Options& opt);
int cmd_predict(const cfg::PipelineConfig& config, const Options& opt,
                const std::string& records_file, const std::string& out_file);
int cmd_explain(const cfg::PipelineConfig& config, const Options& opt,
                const std::string& records_file, const std::string& out_file);
int cmd_experiment(const cfg::PipelineConfig& config, const Options& opt,
                   const std::string& kind);

int run_cli(int argc, char** argv);

// Refuses to overwrite an existing artifact whose bytes differ unless
// force is set; identical rewrites are no-ops.
void write_artifact(const std::string& path, const std::string& bytes, bool force);

}  // namespace kpi::cli
