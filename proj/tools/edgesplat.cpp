#include "edgesplat/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return edgesplat::run_cli(argc, argv, std::cout, std::cerr); }
