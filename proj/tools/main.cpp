#include "pidnet/cli.hpp"

int main(int argc, char** argv) { return pidnet::run_cli(argc, argv); }
