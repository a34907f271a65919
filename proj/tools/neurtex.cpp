// SPDX-License-Identifier: Apache-2.0
// Command-line front end: scene and dataset generation, training, sequence
// rendering, evaluation and the ablation table.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "commands.hpp"
#include "neurtex/errors.hpp"
#include "neurtex/parallel.hpp"

namespace {

int exit_code(neurtex::ErrorCategory c) {
  switch (c) {
    case neurtex::ErrorCategory::Config: return 2;
    case neurtex::ErrorCategory::Contract: return 3;
    case neurtex::ErrorCategory::Io: return 4;
    case neurtex::ErrorCategory::Sampling: return 5;
    case neurtex::ErrorCategory::Numerical: return 6;
  }
  return 70;
}

// One line on stderr: "error <category>: <message>".
int fail(const std::string& category, std::string message, int code) {
  std::replace(message.begin(), message.end(), '\n', ' ');
  std::fprintf(stderr, "error %s: %s\n", category.c_str(), message.c_str());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neurtex: neural-texture sim2real translation toolkit"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "Thread cap (overrides NEURTEX_THREADS)")->check(CLI::PositiveNumber);

  neurtex::cli::register_commands(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 64);
  }

  if (threads > 0) neurtex::set_thread_count(threads);
  try {
    for (auto* sub : app.get_subcommands()) neurtex::cli::run(sub->get_name());
  } catch (const neurtex::Error& e) {
    return fail(neurtex::category_name(e.category()), e.what(), exit_code(e.category()));
  } catch (const nlohmann::json::exception& e) {
    return fail("config", e.what(), 2);
  } catch (const std::filesystem::filesystem_error& e) {
    return fail("io", e.what(), 4);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), 70);
  }
  return 0;
}
