#pragma once

#include "measure_filter/base_measure.hpp"
#include "measure_filter/dual.hpp"
#include "measure_filter/dw_filter.hpp"
#include "measure_filter/errors.hpp"
#include "measure_filter/fv_filter.hpp"
#include "measure_filter/multiplicity.hpp"
#include "measure_filter/numeric.hpp"
#include "measure_filter/parallel.hpp"
#include "measure_filter/parametric.hpp"
#include "measure_filter/random.hpp"
#include "measure_filter/random_measures.hpp"
#include "measure_filter/simulation.hpp"
