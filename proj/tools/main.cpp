#include <iostream>
#include <string>
#include <vector>

#include "lbdface/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return lbdface::run_cli(args, std::cout, std::cerr);
}
