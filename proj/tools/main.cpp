#include "rollout_lab/cli.hpp"

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return rollout_lab::cli::run(args, std::cout, std::cerr);
}
