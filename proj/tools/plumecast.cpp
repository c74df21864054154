#include "plumecast/cli.hpp"

int main(int argc, char** argv) { return plumecast::run_cli(argc, argv); }
