#include <iostream>

#include "ecr/cli.hpp"

int main(int argc, char** argv) {
  return ecr::dispatch(argc, argv, std::cout, std::cerr);
}
