#pragma once

// Umbrella header for the constrained Wasserstein-Fisher-Rao library.

#include "wfr/errors.hpp"
#include "wfr/grid.hpp"
#include "wfr/measures.hpp"
#include "wfr/energy.hpp"
#include "wfr/paths.hpp"
#include "wfr/refine.hpp"
#include "wfr/solver.hpp"
#include "wfr/certify.hpp"
#include "wfr/config.hpp"
#include "wfr/io.hpp"
