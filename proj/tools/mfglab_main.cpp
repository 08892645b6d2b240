#include "mfglab/config.hpp"

int main(int argc, char** argv) { return mfg::cli_main(argc, argv); }
