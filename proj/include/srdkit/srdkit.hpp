#pragma once

#include "srdkit/linalg.hpp"
#include "srdkit/maxdet.hpp"
#include "srdkit/model.hpp"
#include "srdkit/oracles.hpp"
#include "srdkit/presets.hpp"
#include "srdkit/problems.hpp"
#include "srdkit/sim.hpp"
#include "srdkit/synthesis.hpp"
