#include <iostream>

#include "myoreg/cli.hpp"

int main(int argc, char** argv) { return myoreg::run_cli(argc, argv, std::cout, std::cerr); }
