#include "cli.hpp"

int main(int argc, char** argv) { return donorpl::cli::run(argc, argv); }
