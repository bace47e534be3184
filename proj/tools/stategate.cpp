#include "stategate/cli.hpp"

int main(int argc, char** argv) { return stategate::cli::run_cli(argc, argv); }
