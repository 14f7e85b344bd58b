#include "csvae/cli.hpp"

int main(int argc, char** argv) { return csvae::cli::run(argc, argv); }
