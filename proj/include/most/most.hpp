#pragma once

#include "most/addrspace.hpp"
#include "most/baselines.hpp"
#include "most/common.hpp"
#include "most/config.hpp"
#include "most/devsim.hpp"
#include "most/harness.hpp"
#include "most/histogram.hpp"
#include "most/mostcore.hpp"
#include "most/optimizer.hpp"
#include "most/policy.hpp"
#include "most/simulator.hpp"
#include "most/workloads.hpp"
