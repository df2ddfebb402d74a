#include "expmem/cli.hpp"

int main(int argc, char** argv) { return expmem::cli::main(argc, argv); }
