#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) { return rwl::cli::dispatch(argc, argv, std::cout, std::cerr); }
