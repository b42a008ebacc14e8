#pragma once

#include "klce/dataset.hpp"
#include "klce/estimator.hpp"
#include "klce/kernels.hpp"
#include "klce/lcb.hpp"
#include "klce/metrics.hpp"
#include "klce/recalibration.hpp"
#include "klce/simulation.hpp"
#include "klce/test.hpp"
