#include <iostream>

#include "ssdu/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ssdu::cli::run(args, std::cout, std::cerr);
}
