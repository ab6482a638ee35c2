/// Umbrella header.
#pragma once

#include "crowdq/io.hpp"
#include "crowdq/metrics.hpp"
#include "crowdq/model.hpp"
#include "crowdq/simulate.hpp"
