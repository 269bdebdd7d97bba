#include <iostream>
#include <string>
#include <vector>

#include "faid/cli.hpp"

int main(int argc, char **argv) {
  std::vector<std::string> args(argv, argv + argc);
  return faid::run_cli(args, std::cout, std::cerr);
}
