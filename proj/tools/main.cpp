#include "hrt/cli.hpp"

int main(int argc, char** argv) { return hrt::cli::run(argc, argv); }
