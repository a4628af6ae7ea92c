#pragma once

#include <functional>
#include <string>

#include <CLI11.hpp>

namespace hteqtl::cli {

struct GlobalOptions {
  std::string threads;  // integer or "auto"; empty = HT_EQTL_THREADS or hardware
  std::string log_level = "info";
  std::string output_dir;
};

// Registers every subcommand; the selected one stores its body in `action`.
void register_commands(CLI::App& app, GlobalOptions& globals, std::function<void()>& action);

void apply_globals(const GlobalOptions& globals);

}  // namespace hteqtl::cli
