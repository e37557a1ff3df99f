#include <vector>

#include "slipfuse/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return slipfuse::cli::run_cli(std::move(args));
}
