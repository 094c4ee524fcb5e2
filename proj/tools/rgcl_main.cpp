#include <iostream>

#include "rgcl/commands.hpp"

int main(int argc, char** argv) { return rgcl::run_cli(argc, argv, std::cout, std::cerr); }
