#include "commands.hpp"

int main(int argc, char** argv) { return nnsb::cli::run(argc, argv); }
