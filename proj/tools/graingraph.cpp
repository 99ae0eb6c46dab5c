#include <iostream>
#include <string>
#include <vector>

#include "graingraph/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv, argv + argc);
  return graingraph::cli::run(args, std::cout, std::cerr);
}
