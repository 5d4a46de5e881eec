#include <iostream>

#include "vimq/cli.hpp"

int main(int argc, char** argv) { return vimq::cli::run_main(argc, argv, std::cout, std::cerr); }
