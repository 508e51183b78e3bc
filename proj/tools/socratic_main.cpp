#include "socratic/pipeline.hpp"

int main(int argc, char** argv) { return socratic::run_cli(argc, argv); }
