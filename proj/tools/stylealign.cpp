#include "stylealign/cli.hpp"

auto main(int argc, char **argv) -> int {
    return stylealign::parse_and_dispatch(argc, argv);
}
