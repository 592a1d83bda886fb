#include "cps/cli.hpp"

int main(int argc, char** argv) { return cps::run(argc, argv); }
