#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "meshgnn/runtime.hpp"

int main(int argc, char** argv) {
  meshgnn::configure_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
