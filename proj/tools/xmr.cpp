#include "xmr/cli.hpp"

int main(int argc, char** argv) { return xmr::cli::run(argc, argv); }
