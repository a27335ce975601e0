#include <iostream>

#include "agf/cli.hpp"

int main(int argc, char** argv) { return agf::run_cli(argc, argv, std::cout, std::cerr); }
