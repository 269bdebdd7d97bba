#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "faid/config.hpp"

namespace faid {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitInputError = 2,
  kExitRuntimeError = 3,
};

/// Test seam: replaces the litho model built from the config.
struct CliHooks {
  std::function<std::shared_ptr<const LithoModel>(const RunConfig &)> make_litho;
};

/// Entry point of the `faid` tool. args[0] is the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err,
            const CliHooks &hooks = {});

}  // namespace faid
