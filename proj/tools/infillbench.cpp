#include "infill/cli.hpp"

int main(int argc, char** argv) { return infill::cli::main(argc, argv); }
