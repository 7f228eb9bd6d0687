#include "fedtrust/cli.hpp"

int main(int argc, char** argv) { return fedtrust::run_cli(argc, argv); }
