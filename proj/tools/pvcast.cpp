#include <iostream>

#include "pvcast/cli.hpp"

int main(int argc, char** argv) { return pvcast::run_cli(argc, argv, std::cout, std::cerr); }
