#include "app.hpp"

#include <iostream>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return tilq::app::run(args, std::cout, std::cerr);
}
