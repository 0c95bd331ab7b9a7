#include "asabf/cli.hpp"

int main(int argc, char** argv) { return asabf::cli::run(argc, argv); }
