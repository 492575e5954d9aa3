#include <iostream>

#include "ginet/cli.hpp"

int main(int argc, char** argv) { return ginet::run_cli(argc, argv, std::cout, std::cerr); }
