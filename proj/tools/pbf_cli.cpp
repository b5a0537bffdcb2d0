#include "pbf/cli.hpp"

int main(int argc, char** argv) { return pbf::parseAndDispatch(argc, argv); }
