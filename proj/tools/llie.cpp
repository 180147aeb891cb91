#include "llie/cli.hpp"

int main(int argc, char** argv) { return llie::cli::run(argc, argv); }
