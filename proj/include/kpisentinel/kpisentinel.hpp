#pragma once

// Umbrella header for the full library.

#include "kpisentinel/adaboost.hpp"
#include "kpisentinel/cluster.hpp"
#include "kpisentinel/csv.hpp"
#include "kpisentinel/features.hpp"
#include "kpisentinel/forecast.hpp"
#include "kpisentinel/geo.hpp"
#include "kpisentinel/ingest.hpp"
#include "kpisentinel/pipeline.hpp"
#include "kpisentinel/rng.hpp"
#include "kpisentinel/signatures.hpp"
#include "kpisentinel/synthetic.hpp"
#include "kpisentinel/timeutil.hpp"
#include "kpisentinel/tree.hpp"
#include "kpisentinel/util.hpp"
