#pragma once

#include "abvr/dataset.hpp"
#include "abvr/errors.hpp"
#include "abvr/estimators.hpp"
#include "abvr/ingest.hpp"
#include "abvr/predictors.hpp"
#include "abvr/selection.hpp"
#include "abvr/simulation.hpp"
#include "abvr/stats.hpp"
