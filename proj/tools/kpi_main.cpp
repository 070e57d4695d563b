#include "kpi/cli.hpp"

int main(int argc, char** argv) { return kpi::cli::run_cli(argc, argv); }
