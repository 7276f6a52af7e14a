#include <iostream>
#include <string>
#include <vector>

#include "ebm3d/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return ebm3d::run_cli(args, std::cout, std::cerr);
}
