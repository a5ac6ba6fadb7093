#include "distfit/cli.hpp"

int main(int argc, char** argv) { return distfit::cli::main(argc, argv); }
