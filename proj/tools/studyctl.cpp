#include "sdlsim/study.hpp"

int main(int argc, char** argv) { return sdlsim::cli_main(argc, argv); }
