#include <iostream>

#include "cohertrace/cli.hpp"

int main(int argc, char** argv) { return cohertrace::run_cli(argc, argv, std::cout, std::cerr); }
