#include "latax/cli.hpp"

int main(int argc, char** argv) { return latax::cli::cli_main(argc, argv); }
