#include "cli.hpp"

int main(int argc, char** argv) {
  mfd::cli::keep_large_allocations();
  return mfd::cli::run(argc, argv);
}
