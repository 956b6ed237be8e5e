#include "iphkit/cli.hpp"

int main(int argc, char** argv) { return iphkit::run_cli(argc, argv); }
