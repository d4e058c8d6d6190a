#pragma once

#include "gatescope/training/evaluate.hpp"
#include "gatescope/training/grad_check.hpp"
#include "gatescope/training/loss.hpp"
#include "gatescope/training/trainer.hpp"
