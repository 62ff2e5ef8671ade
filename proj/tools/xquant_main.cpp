#include <iostream>

#include "xquant/cli.hpp"

int main(int argc, char** argv) { return xquant::cli::run(argc, argv, std::cout, std::cerr); }
