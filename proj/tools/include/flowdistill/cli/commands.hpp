#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowdistill/cli/config.hpp"

namespace flowdistill::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

// Each command writes its files under `out` and a summary.txt, prints the
// summary to `log`, and returns an exit code. Errors propagate as exceptions.
int cmd_train_prior(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_sample(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_distill(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_pipeline(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_compare(const Config& cfg, const std::filesystem::path& out, std::ostream& log);
int cmd_eval(const Config& cfg, const std::filesystem::path& out, std::ostream& log);

// Full command line: flowdistill <command> --config <path> [--seed N] [--out DIR] [--print-config]
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowdistill::cli
