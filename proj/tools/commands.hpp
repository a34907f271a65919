// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

namespace CLI {
class App;
}

namespace neurtex::cli {

/// Adds every subcommand and its flags to `app`.
void register_commands(CLI::App& app);
/// Runs the parsed subcommand; library errors propagate to main.
void run(const std::string& name);

}  // namespace neurtex::cli
