#include "keymatch3d/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return keymatch3d::run_cli(argc, argv, std::cout, std::cerr); }
