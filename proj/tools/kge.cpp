#include "kge/cli.hpp"

int main(int argc, char** argv) { return kge::cli::run(argc, argv); }
