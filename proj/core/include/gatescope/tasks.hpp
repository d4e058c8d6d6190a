#pragma once

#include "gatescope/tasks/corpus.hpp"
#include "gatescope/tasks/documents.hpp"
#include "gatescope/tasks/vocabulary.hpp"
