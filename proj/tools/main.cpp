#include "cli.hpp"

int main(int argc, char** argv) { return agdet::cli::run(argc, argv); }
