#include "rlc/cli.hpp"

int main(int argc, char** argv) { return rlc::run_cli(argc, argv); }
