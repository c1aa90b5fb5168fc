#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return viscobeam::cli::dispatch(argc, argv, std::cout, std::cerr); }
