#include <iostream>
#include <string>
#include <vector>

#include "f3net/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return f3net::run_cli(args, std::cout, std::cerr);
}
