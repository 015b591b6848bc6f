#include "kcc/cli.hpp"

int main(int argc, char** argv) { return kcc::run_cli(argc, argv); }
