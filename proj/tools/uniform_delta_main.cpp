#include "unidelta/cli.hpp"

int main(int argc, char** argv) { return unidelta::cli::run(argc, argv); }
