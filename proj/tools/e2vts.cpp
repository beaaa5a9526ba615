#include "e2vts/cli.hpp"

int main(int argc, char** argv) { return e2vts::cli::dispatch(argc, argv); }
