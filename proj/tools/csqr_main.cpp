#include "csqr/cli.hpp"

int main(int argc, char** argv) { return csqr::run_cli(argc, argv); }
