#include <string>
#include <vector>

#include "noie/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return noie::run_cli(std::move(args));
}
