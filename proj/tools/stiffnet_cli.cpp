#include "cli_app.hpp"

int main(int argc, char** argv) { return stiffnet::cli::run_cli(argc, argv); }
