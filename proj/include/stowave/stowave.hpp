#pragma once

#include "stowave/covariance.hpp"
#include "stowave/error.hpp"
#include "stowave/experiments.hpp"
#include "stowave/greens.hpp"
#include "stowave/harness.hpp"
#include "stowave/lattice.hpp"
#include "stowave/noise.hpp"
#include "stowave/solver.hpp"
#include "stowave/stats.hpp"
#include "stowave/stochint.hpp"
#include "stowave/weighted.hpp"
