#include <iostream>
#include <string>
#include <vector>

#include "smolder/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return smolder::dispatch_command(args, std::cout, std::cerr);
}
