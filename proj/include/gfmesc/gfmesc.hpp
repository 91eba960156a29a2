#pragma once

#include "gfmesc/errors.hpp"
#include "gfmesc/network.hpp"
#include "gfmesc/power_flow.hpp"
#include "gfmesc/devices.hpp"
#include "gfmesc/simulator.hpp"
#include "gfmesc/metrics.hpp"
#include "gfmesc/esc.hpp"
#include "gfmesc/harness.hpp"
