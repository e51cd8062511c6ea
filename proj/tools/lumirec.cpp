#include "lumirec/cli.hpp"

int main(int argc, char** argv) { return lumirec::cli::run(argc, argv); }
