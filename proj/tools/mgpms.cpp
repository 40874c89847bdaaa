#include <iostream>

#include "mgpms/cli/cli.hpp"

int main(int argc, char** argv) {
  return mgpms::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
