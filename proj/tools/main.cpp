#include <string>
#include <vector>

#include "cari/experiment.hpp"

int main(int argc, char** argv) {
  return cari::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
