#pragma once

#include <iosfwd>

#include "llie/run_config.hpp"

namespace llie::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `llie` binary. Subcommands: make-data, train,
/// enhance, eval. Settings resolve as defaults < --config file < flags.
/// Never throws; failures map to kExitUsage or kExitRuntime with a message
/// on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

/// Subcommand bodies on a resolved config. These throw; run() maps the
/// exception type to an exit code.
void cmd_make_data(const RunConfig& cfg, std::ostream& out);
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_enhance(const RunConfig& cfg, std::ostream& out);
void cmd_eval(const RunConfig& cfg, std::ostream& out);

}  // namespace llie::cli
