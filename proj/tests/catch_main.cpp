// Single translation unit for the Catch2 implementation.
#include <catch2/catch_amalgamated.cpp>
