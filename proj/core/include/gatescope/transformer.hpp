#pragma once

#include "gatescope/transformer/analysis.hpp"
#include "gatescope/transformer/checkpoint.hpp"
#include "gatescope/transformer/forward.hpp"
#include "gatescope/transformer/interventions.hpp"
#include "gatescope/transformer/model.hpp"
#include "gatescope/transformer/tokens.hpp"
