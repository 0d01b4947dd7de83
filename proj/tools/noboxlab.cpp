#include "noboxlab/cli/orchestrator.hpp"

int main(int argc, char** argv) { return noboxlab::cli_main(argc, argv); }
