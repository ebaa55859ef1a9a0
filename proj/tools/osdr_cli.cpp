#include <string>
#include <vector>

#include "osdr/cli_app.hpp"

int main(int argc, char** argv) {
  return osdr::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
