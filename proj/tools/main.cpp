#include "drgrade/cli.hpp"

int main(int argc, char** argv) { return drgrade::run_cli(argc, argv); }
