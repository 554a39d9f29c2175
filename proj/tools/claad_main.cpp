#include "claad/cli.hpp"

int main(int argc, char** argv) { return claad::cli_run(argc, argv); }
