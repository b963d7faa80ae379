#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return spseg::run_cli(argc, argv, std::cout, std::cerr); }
