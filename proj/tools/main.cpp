#include <string>
#include <vector>

#include "amsa/experiment.hpp"

int main(int argc, char** argv) {
  return amsa::cli(std::vector<std::string>(argv + 1, argv + argc));
}
