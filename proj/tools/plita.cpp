#include <malloc.h>

#include <iostream>

#include "plita/cli/commands.hpp"

int main(int argc, char** argv) {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
  return plita::cli::run(argc, argv, std::cout, std::cerr);
}
