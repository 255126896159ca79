#include "cli.hpp"

int main(int argc, char** argv) { return edgespec::cli::run(argc, argv); }
