#include <iostream>

#include "odetrack/cli/commands.hpp"

int main(int argc, char** argv) {
  return odetrack::cli::run(argc, argv, std::cout, std::cerr);
}
