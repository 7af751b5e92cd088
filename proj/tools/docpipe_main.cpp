#include "docpipe/cli.hpp"

int main(int argc, char** argv) {
    return docpipe::cli::run(argc, argv);
}
