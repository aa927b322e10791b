#include <catch2/catch_amalgamated.hpp>

#include "quantopt/quantopt.hpp"
