#include "mtem/cli.hpp"

int main(int argc, char** argv) { return mtem::cli::run(argc, argv); }
