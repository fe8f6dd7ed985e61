#include <iostream>

#include "epopt/cli.h"

int main(int argc, char** argv) { return epopt::run_cli(argc, argv, std::cout, std::cerr); }
