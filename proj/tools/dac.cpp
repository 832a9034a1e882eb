#include <iostream>

#include "dac/cli/commands.hpp"

int main(int argc, char** argv) { return dac::cli::run_cli(argc, argv, std::cout, std::cerr); }
