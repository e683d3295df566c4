#include "cli.hpp"

int main(int argc, char** argv) { return gsr::cli::run(argc, argv); }
