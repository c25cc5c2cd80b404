#include "commands.hpp"

int main(int argc, char** argv) { return pmdlab::cli::run(argc, argv); }
