#include <string>
#include <vector>

#include "car/cli.hpp"

int main(int argc, char** argv) {
  return car::run_commands(std::vector<std::string>(argv + 1, argv + argc));
}
