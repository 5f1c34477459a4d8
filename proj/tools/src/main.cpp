#include <iostream>

#include "urbanvae_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return urbanvae::cli::run(args, std::cerr);
}
