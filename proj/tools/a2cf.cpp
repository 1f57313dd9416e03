#include "a2cf/cli.hpp"

int main(int argc, char** argv) { return a2cf::cli_dispatch(argc, argv); }
