#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "cftk/log.hpp"

int main(int argc, char** argv) {
  cftk::tune_allocator();
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
