#include "memgan/cli.hpp"

int main(int argc, char** argv) { return memgan::cli_main(argc, argv); }
