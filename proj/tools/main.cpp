#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "spc/linalg.hpp"

int main(int argc, char** argv) {
  spc::configure_blas_threads();
  std::vector<std::string> args(argv + 1, argv + argc);
  return spc::cli::run_main(args, std::cout, std::cerr);
}
