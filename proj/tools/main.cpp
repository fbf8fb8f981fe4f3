#include "cli.hpp"

int main(int argc, char** argv) { return ordcfa::run_cli(argc, argv); }
