#include <iostream>

#include "dapt/cli.hpp"

int main(int argc, char** argv) {
  dapt::CliEnv env{std::cout, std::cerr, nullptr, nullptr};
  return dapt::run_cli(argc, argv, env);
}
