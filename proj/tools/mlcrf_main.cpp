#include <iostream>

#include "mlcrf/cli.hpp"

int main(int argc, char** argv) { return mlcrf::cli::run(argc, argv, std::cout, std::cerr); }
