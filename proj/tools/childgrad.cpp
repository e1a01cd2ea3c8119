#include "childgrad/cli.hpp"

int main(int argc, char** argv) { return childgrad::cli_main(argc, argv); }
