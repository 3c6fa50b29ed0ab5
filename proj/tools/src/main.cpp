#include "idiolens/cli.hpp"

int main(int argc, char** argv) { return idiolens::cli::main(argc, argv); }
