#include "fiberlab/cli.hpp"

int main(int argc, char** argv) { return fiberlab::cli_main(argc, argv); }
