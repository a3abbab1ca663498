#pragma once

// Umbrella header.

#include "msgcn/checks.hpp"
#include "msgcn/common.hpp"
#include "msgcn/data.hpp"
#include "msgcn/gradcheck.hpp"
#include "msgcn/graph.hpp"
#include "msgcn/layers.hpp"
#include "msgcn/loss.hpp"
#include "msgcn/metrics.hpp"
#include "msgcn/models.hpp"
#include "msgcn/ops.hpp"
#include "msgcn/report.hpp"
#include "msgcn/tape.hpp"
#include "msgcn/tensor.hpp"
#include "msgcn/training.hpp"
