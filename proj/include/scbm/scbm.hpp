#pragma once

#include "scbm/core.hpp"
#include "scbm/rng.hpp"
#include "scbm/panel.hpp"
#include "scbm/json_io.hpp"
#include "scbm/netgen.hpp"
#include "scbm/estimator.hpp"
#include "scbm/cocluster.hpp"
#include "scbm/select.hpp"
#include "scbm/metrics.hpp"
#include "scbm/experiment.hpp"
