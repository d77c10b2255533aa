#include <iostream>

#include "wcegen/cli.hpp"

int main(int argc, char** argv) { return wce::dispatch(argc, argv, std::cout, std::cerr); }
