#include <iostream>

#include "commands.hpp"
#include "hteqtl/errors.hpp"
#include "manifest.hpp"

int main(int argc, char** argv) {
  using namespace hteqtl;
  CLI::App app{"Multi-tissue eQTL analysis by pairwise fitting and model assembly", "ht-eqtl"};
  app.set_version_flag("--version", std::string(cli::kToolVersion));
  cli::GlobalOptions globals;
  std::function<void()> action;
  cli::register_commands(app, globals, action);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    cli::apply_globals(globals);
    if (action) action();
    return 0;
  } catch (const InputError& e) {
    std::cerr << "ht-eqtl: input error: " << e.what() << "\n";
    return 2;
  } catch (const ContractViolation& e) {
    std::cerr << "ht-eqtl: input error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "ht-eqtl: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "ht-eqtl: input error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ht-eqtl: internal error: " << e.what() << "\n";
    return 1;
  }
}
