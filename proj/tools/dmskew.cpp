#include <vector>

#include "dmskew/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return dmskew::cli::run_cli(args);
}
