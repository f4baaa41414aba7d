#include "aftergate/cli.hpp"

int main(int argc, char** argv) { return aftergate::run_cli(argc, argv); }
