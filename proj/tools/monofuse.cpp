#include "monofuse/cli.hpp"

int main(int argc, char** argv) { return monofuse::cli::dispatch(argc, argv); }
