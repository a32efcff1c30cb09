#include "uniada/cli.hpp"

int main(int argc, char **argv) { return uniada::run_cli(argc, argv); }
