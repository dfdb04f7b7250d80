#include "specsplit/cli.hpp"

int main(int argc, char** argv) { return specsplit::cli::main_entry(argc, argv); }
