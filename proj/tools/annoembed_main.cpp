#include "annoembed/cli.hpp"

int main(int argc, char** argv) { return annoembed::run_cli(argc, argv); }
