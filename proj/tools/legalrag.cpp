#include "legalrag/cli.hpp"

int main(int argc, char** argv) { return legalrag::cli::run_cli(argc, argv); }
