#include "corrstop/cli.hpp"

int main(int argc, char** argv) { return corrstop::cli::run(argc, argv); }
