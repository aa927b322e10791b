#pragma once

// Umbrella header: pulls in the whole library.

#include "quantopt/can_scan.hpp"
#include "quantopt/core.hpp"
#include "quantopt/data_io.hpp"
#include "quantopt/harness.hpp"
#include "quantopt/measures.hpp"
#include "quantopt/nemsis.hpp"
#include "quantopt/rewards.hpp"
