#pragma once

// Everything in the numerical core.
#include "wulffstab/core.hpp"
#include "wulffstab/integrand.hpp"
#include "wulffstab/shape.hpp"
#include "wulffstab/grid.hpp"
#include "wulffstab/torsion.hpp"
#include "wulffstab/surface.hpp"
#include "wulffstab/fit.hpp"
#include "wulffstab/analysis.hpp"
