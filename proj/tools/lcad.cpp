#include "lcad/cli.hpp"

int main(int argc, char** argv) { return lcad::cli::run(argc, argv); }
