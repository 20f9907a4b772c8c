#include <string>
#include <vector>

#include "secnosql/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return secnosql::run_cli(std::move(args));
}
