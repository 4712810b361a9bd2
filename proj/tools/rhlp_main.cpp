#include "rhlp/cli.hpp"

int main(int argc, char** argv) { return rhlp::run_cli(argc, argv); }
