#include "csaseg/cli.hpp"

int main(int argc, char** argv) {
    return csaseg::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
