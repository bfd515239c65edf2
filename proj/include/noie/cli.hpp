#pragma once

#include <string>
#include <vector>

namespace noie {

// Entry point behind the `noie` binary. `args` excludes the program
// name. Exit codes: 0 success, 1 usage error, 2 data/file error,
// 3 runtime failure.
int run_cli(std::vector<std::string> args);

}  // namespace noie
