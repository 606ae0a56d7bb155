#include <iostream>

#include "tb/cli.hpp"

int main(int argc, char** argv) { return tb::cli::run(argc, argv, std::cout, std::cerr); }
