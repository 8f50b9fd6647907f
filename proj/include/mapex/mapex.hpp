#pragma once

#include "mapex/baselines.hpp"
#include "mapex/config.hpp"
#include "mapex/dtree.hpp"
#include "mapex/env.hpp"
#include "mapex/errors.hpp"
#include "mapex/eval.hpp"
#include "mapex/expert.hpp"
#include "mapex/extraction.hpp"
#include "mapex/oracle.hpp"
#include "mapex/policy.hpp"
#include "mapex/rng.hpp"
