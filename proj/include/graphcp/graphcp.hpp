#pragma once

#include "graphcp/cfgnn.hpp"
#include "graphcp/conformal.hpp"
#include "graphcp/data.hpp"
#include "graphcp/errors.hpp"
#include "graphcp/experiment.hpp"
#include "graphcp/graph.hpp"
#include "graphcp/io.hpp"
#include "graphcp/metrics.hpp"
#include "graphcp/naps.hpp"
#include "graphcp/partition.hpp"
#include "graphcp/random.hpp"
#include "graphcp/scores.hpp"
#include "graphcp/synth.hpp"
