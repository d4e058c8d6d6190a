#pragma once

#include "gatescope/experiments/pipelines.hpp"
#include "gatescope/experiments/records.hpp"
