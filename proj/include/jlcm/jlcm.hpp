#pragma once

#include "jlcm/csv.hpp"
#include "jlcm/data.hpp"
#include "jlcm/design.hpp"
#include "jlcm/error.hpp"
#include "jlcm/external.hpp"
#include "jlcm/fit.hpp"
#include "jlcm/fit_io.hpp"
#include "jlcm/gof.hpp"
#include "jlcm/gridsearch.hpp"
#include "jlcm/io.hpp"
#include "jlcm/likelihood.hpp"
#include "jlcm/longitudinal.hpp"
#include "jlcm/model_spec.hpp"
#include "jlcm/monte_carlo.hpp"
#include "jlcm/optimizer.hpp"
#include "jlcm/parallel.hpp"
#include "jlcm/parameters.hpp"
#include "jlcm/posterior.hpp"
#include "jlcm/prediction.hpp"
#include "jlcm/simulator.hpp"
#include "jlcm/splines.hpp"
#include "jlcm/survival.hpp"
