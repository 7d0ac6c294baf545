#include <iostream>

#include "gminf_app/commands.hpp"

int main(int argc, char** argv) {
  return gminf::app::run_cli(argc, argv, std::cout, std::cerr);
}
