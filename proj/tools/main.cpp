#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return omada::cli::dispatch(argc, argv, std::cout, std::cerr); }
