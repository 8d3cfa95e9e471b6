// Apache License, Version 2.0, refer to LICENSE.txt

#include "pmclust/cli.hpp"

int main(int argc, char** argv) { return pmclust::cli::cli_dispatch(argc, argv); }
