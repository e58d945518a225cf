#include <iostream>

#include "xling/cli.hpp"

int main(int argc, char** argv) {
  return xling::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
