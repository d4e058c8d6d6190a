#pragma once

#include "gatescope/geometry/adp.hpp"
#include "gatescope/geometry/density.hpp"
#include "gatescope/geometry/intrinsic_dimension.hpp"
#include "gatescope/geometry/knn.hpp"
#include "gatescope/geometry/metrics.hpp"
#include "gatescope/geometry/point_set.hpp"
