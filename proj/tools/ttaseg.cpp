#include <iostream>
#include <string>
#include <vector>

#include "ttaseg/commands.hpp"

int main(int argc, char** argv) {
  ttaseg::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return ttaseg::run_cli(args, std::cout, std::cerr);
}
