#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace satseg::cli {

// Runs the command-line interface. Exit codes: 0 success, 1 usage error,
// 2 data error. Streams are injectable for tests.
int run(const std::vector<std::string>& args, std::istream& in = std::cin, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

int run(int argc, const char* const* argv, std::istream& in = std::cin, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace satseg::cli
