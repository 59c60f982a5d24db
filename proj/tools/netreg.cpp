#include "netreg/cli.hpp"

int main(int argc, char** argv) { return netreg::main_entry(argc, argv); }
