#include "satseg/cli.hpp"

int main(int argc, char** argv) { return satseg::cli::run(argc, argv); }
