#pragma once

// Umbrella header for the phidiv library.

#include "phidiv/distributions.hpp"
#include "phidiv/divergence.hpp"
#include "phidiv/dual_solver.hpp"
#include "phidiv/errors.hpp"
#include "phidiv/estimator.hpp"
#include "phidiv/inference.hpp"
#include "phidiv/io.hpp"
#include "phidiv/moment_model.hpp"
#include "phidiv/newton.hpp"
#include "phidiv/simulation.hpp"
