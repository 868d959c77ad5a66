// qest <choi|fisher|phase|simulate> --config <path> [--out <path>] [--format json|csv]

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qest/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qest: one-parameter quantum channel estimation"};
  std::string command, config, out, format;
  app.add_option("command", command, "choi, fisher, phase or simulate")
      ->required()
      ->check(CLI::IsMember({"choi", "fisher", "phase", "simulate"}));
  app.add_option("--config", config, "JSON config file")->required();
  app.add_option("--out", out, "output file (default: config output.path, else stdout)");
  app.add_option("--format", format, "json or csv (default: config output.format, else json)")
      ->check(CLI::IsMember({"json", "csv"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  return qest::cli::run(command, config, out, format, std::cout, std::cerr);
}
