#include <iostream>

#include "vitct/cli.hpp"

int main(int argc, char** argv) {
  return vitct::cli::run(argc, argv, std::cout, std::cerr);
}
