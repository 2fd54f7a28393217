#include <string>
#include <vector>

#include "tarnet/commands.hpp"

int main(int argc, char** argv) {
  return tarnet::run_cli(std::vector<std::string>(argv, argv + argc));
}
