#pragma once

// Umbrella header for the mean-field state-density flow library.

#include "mfsde/coefficients.hpp"
#include "mfsde/config.hpp"
#include "mfsde/csv.hpp"
#include "mfsde/errors.hpp"
#include "mfsde/fp_solver.hpp"
#include "mfsde/functions.hpp"
#include "mfsde/grid.hpp"
#include "mfsde/kernel_flow.hpp"
#include "mfsde/parallel.hpp"
#include "mfsde/rng.hpp"
#include "mfsde/scenario.hpp"
#include "mfsde/sde.hpp"
#include "mfsde/stats.hpp"
#include "mfsde/tridiag.hpp"
#include "mfsde/value_function.hpp"
#include "mfsde/verification.hpp"
