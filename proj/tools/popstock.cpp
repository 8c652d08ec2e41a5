#include <string>
#include <vector>

#include "popstock/cli.hpp"

int main(int argc, char** argv) {
  return popstock::cli::run(std::vector<std::string>(argv, argv + argc));
}
