#include "cli_app.hpp"

int main(int argc, char** argv) {
  mest::cli::Cli cli;
  return cli.run(argc, argv);
}
