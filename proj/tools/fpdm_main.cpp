#include <iostream>

#include "fpdm/harness/cli.hpp"

int main(int argc, char** argv) {
  fpdm::harness::tune_allocator();
  return fpdm::harness::run_cli(argc, argv, std::cout, std::cerr);
}
