#pragma once

// Umbrella header for the quadratic-BSDE toolkit: drivers and their
// structural validation, path simulation, the semilinear PDE solver, the
// truncation pipeline, the drift-operator calculus with certified test
// functions, statistical solution tests, and coupled-motion experiments.

#include "qbsde/config.hpp"
#include "qbsde/coupling.hpp"
#include "qbsde/driver.hpp"
#include "qbsde/experiments.hpp"
#include "qbsde/forward.hpp"
#include "qbsde/io.hpp"
#include "qbsde/linalg.hpp"
#include "qbsde/martingale.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/pde.hpp"
#include "qbsde/rng.hpp"
#include "qbsde/subharmonic.hpp"
#include "qbsde/terminal.hpp"
#include "qbsde/time_grid.hpp"
