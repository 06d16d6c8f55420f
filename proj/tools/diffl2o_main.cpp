#include <iostream>
#include <string>
#include <vector>

#include "diffl2o/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return diffl2o::dispatch(args, std::cout, std::cerr);
}
