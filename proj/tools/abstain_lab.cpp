#include "abstain/cli.hpp"

int main(int argc, char** argv) { return abstain::run_cli(argc, argv); }
