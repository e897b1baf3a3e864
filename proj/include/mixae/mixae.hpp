#pragma once

#include "mixae/checkpoint.hpp"
#include "mixae/data.hpp"
#include "mixae/eval.hpp"
#include "mixae/grad_check.hpp"
#include "mixae/layers.hpp"
#include "mixae/model.hpp"
#include "mixae/objective.hpp"
#include "mixae/tensor.hpp"
#include "mixae/training.hpp"
