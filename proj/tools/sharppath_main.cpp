#include <string>
#include <vector>

#include "sharppath/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sharppath::cli::run(args);
}
