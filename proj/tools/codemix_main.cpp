#include <vector>

#include "codemix/pipeline.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return codemix::pipeline::run_cli(args);
}
