#include "elucid/cli.hpp"

int main(int argc, char** argv) { return elucid::cli::run(argc, argv); }
