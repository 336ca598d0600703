#include "expertnet/cli.hpp"

int main(int argc, char** argv) { return expertnet::cli::main(argc, argv); }
