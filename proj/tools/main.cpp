#include "dxrag/cli.hpp"

int main(int argc, char** argv) {
    return dxrag::cli::run(argc, argv);
}
