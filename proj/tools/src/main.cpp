#include <iostream>

#include "rfpca_cli/cli.hpp"

int main(int argc, char** argv) { return rfpca::cli::run(argc, argv, std::cout, std::cerr); }
