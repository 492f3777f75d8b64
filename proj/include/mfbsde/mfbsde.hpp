// mfbsde.hpp - umbrella header
#pragma once

#include "applications.hpp"
#include "coefficients.hpp"
#include "errors.hpp"
#include "fixed_point.hpp"
#include "grid.hpp"
#include "inner_solver.hpp"
#include "io.hpp"
#include "linalg.hpp"
#include "measure.hpp"
#include "parallel.hpp"
#include "problems.hpp"
#include "rng.hpp"
