#include <iostream>

#include "abvr/cli.hpp"

int main(int argc, char** argv) { return abvr::cli::run(argc, argv, std::cout, std::cerr); }
