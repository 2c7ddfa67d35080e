#include "kslab/cli_io.hpp"

#include <iostream>

int main(int argc, char** argv) { return kslab::cli_main(argc, argv, std::cout, std::cerr); }
