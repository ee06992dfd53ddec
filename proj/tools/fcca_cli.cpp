#include <iostream>

#include "fcca/app.hpp"

int main(int argc, char** argv) { return fcca::app::run_cli(argc, argv, std::cout, std::cerr); }
