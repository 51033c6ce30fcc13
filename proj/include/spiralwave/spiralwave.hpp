#pragma once

#include "spiralwave/errors.hpp"
#include "spiralwave/specfun.hpp"
#include "spiralwave/model.hpp"
#include "spiralwave/jet.hpp"
#include "spiralwave/grid.hpp"
#include "spiralwave/collocation.hpp"
#include "spiralwave/leading_order.hpp"
#include "spiralwave/bessel_solver.hpp"
#include "spiralwave/series_engine.hpp"
#include "spiralwave/finite_q.hpp"
#include "spiralwave/fit.hpp"
#include "spiralwave/config.hpp"
#include "spiralwave/cli.hpp"
