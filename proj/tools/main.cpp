#include "cli.hpp"

int main(int argc, char** argv) { return intentgrid::cli::run(argc, argv); }
