#include <iostream>

#include "unfold/commands.hpp"

int main(int argc, char** argv) { return unfold::cli_main(argc, argv, std::cout, std::cerr); }
