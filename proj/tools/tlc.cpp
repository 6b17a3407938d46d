#include <iostream>

#include "tlc/cli.hpp"

int main(int argc, char** argv) { return tlc::run_cli(argc, argv, std::cout, std::cerr); }
