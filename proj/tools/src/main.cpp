#include <iostream>

#include "meshgnn/runtime.hpp"
#include "meshgnn_cli/cli.hpp"

int main(int argc, char** argv) {
  meshgnn::configure_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return meshgnn::cli::run(args, std::cout, std::cerr);
}
