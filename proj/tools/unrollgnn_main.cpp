#include "ugnn/cli.hpp"

int main(int argc, char** argv) { return ugnn::run(argc, argv); }
